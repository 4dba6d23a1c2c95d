#include "spikefuse/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_map>

namespace spikefuse {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_volume(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::vector<double>& detail::Node::grad_buffer() {
  if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  auto n = shape_volume(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  for (auto d : shape)
    if (d == 0) throw InvalidInput("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_volume(shape) != values.size())
    throw InvalidInput("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= node_->shape.size()) throw InvalidInput("axis out of range for shape " + shape_str(node_->shape));
  return node_->shape[axis];
}

std::size_t Tensor::size() const { return node_->value.size(); }

std::span<const double> Tensor::values() const { return node_->value; }

std::span<double> Tensor::mutable_values() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) throw InvalidInput("item() requires a single-element tensor, got " + shape_str(shape()));
  return node_->value[0];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }

bool Tensor::has_grad() const { return node_ && node_->grad.size() == node_->value.size(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) return {};
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const { return from(node_->shape, node_->value, false); }

const char* Tensor::op_name() const { return node_->op; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(const char* op, Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  bool record = false;
  if (g_grad_enabled)
    for (const auto& p : parents)
      if (p.requires_grad()) record = true;
  if (record) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

namespace {

// Iterative post-order DFS; returns nodes with parents before children.
std::vector<detail::Node*> topo_order(detail::Node* root) {
  std::vector<detail::Node*> order;
  std::unordered_map<detail::Node*, bool> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  seen[root] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !seen[parent]) {
        seen[parent] = true;
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  return order;
}

}  // namespace

Tape tape_of(const Tensor& root) {
  Tape tape;
  if (!root.requires_grad()) return tape;
  auto order = topo_order(root.node().get());
  std::unordered_map<const detail::Node*, std::size_t> index;
  for (auto* node : order) {
    TapeEntry entry{node->op, {}};
    for (const auto& p : node->parents) {
      auto it = index.find(p.get());
      if (it != index.end()) entry.parents.push_back(it->second);
    }
    index[node] = tape.size();
    tape.push_back(std::move(entry));
  }
  return tape;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw InvalidInput("backward() requires a scalar loss, got " +
                       (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  if (!loss.requires_grad()) return;
  auto* root = loss.node().get();
  auto order = topo_order(root);
  for (auto* node : order)
    if (!node->is_leaf()) node->grad.assign(node->value.size(), 0.0);
  root->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto* node = *it;
    if (!node->is_leaf()) node->backward(*node);
  }
}

std::vector<double> finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("finite_diff_grad: eps must be positive");
  Tensor probe = x.detach();
  auto data = probe.mutable_values();
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = f(probe);
    data[i] = saved - eps;
    const double down = f(probe);
    data[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: objective returned a non-finite value");
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

std::vector<double> finite_diff_grad_inplace(const std::function<double()>& f, Tensor& param, double eps) {
  if (!(eps > 0.0)) throw InvalidInput("finite_diff_grad: eps must be positive");
  auto data = param.mutable_values();
  std::vector<double> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double up = f();
    data[i] = saved - eps;
    const double down = f();
    data[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: objective returned a non-finite value");
    out[i] = (up - down) / (2.0 * eps);
  }
  return out;
}

}  // namespace spikefuse
