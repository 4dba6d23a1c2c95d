#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spikefuse/errors.hpp"

namespace spikefuse {

using Shape = std::vector<std::size_t>;

std::size_t shape_volume(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

// One recorded value in the gradient graph. Leaves have no backward function.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  // Lazily sized gradient accumulator.
  std::vector<double>& grad_buffer();
};

}  // namespace detail

/// Dense row-major tensor of doubles with optional reverse-mode gradient recording.
///
/// A Tensor is a cheap handle: copies share the same storage. Parameters are
/// leaves with requires_grad set; every op applied to a recording input returns
/// a node that remembers how to push gradients back to its parents.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const;

  std::span<const double> values() const;
  // Direct write access, intended for leaves (parameter updates, test perturbation).
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t flat_index) const { return values()[flat_index]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const char* op_name() const;
  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Whether ops currently record the graph (thread-local; on by default).
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds a result node. Records parents and the backward closure only when
/// gradient recording is on and at least one parent requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> parents, std::function<void(detail::Node&)> backward);

/// One entry of the recorded tape, in topological order.
struct TapeEntry {
  const char* op;
  std::vector<std::size_t> parents;  // indices into the tape, all smaller than this entry's index
};

using Tape = std::vector<TapeEntry>;

/// Recorded operations reachable from `root`, ordered so that parents precede children.
Tape tape_of(const Tensor& root);

/// Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across calls;
/// intermediate gradients are reset on every call.
void backward(const Tensor& loss);

/// Central-difference gradient of `f` at `x`: (f(x+eps e_i) - f(x-eps e_i)) / (2 eps).
std::vector<double> finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                     double eps);

/// Same rule, perturbing the leaf `param` in place and restoring it afterwards.
std::vector<double> finite_diff_grad_inplace(const std::function<double()>& f, Tensor& param, double eps);

}  // namespace spikefuse
