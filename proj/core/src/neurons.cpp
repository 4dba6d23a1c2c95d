#include "spikefuse/neurons.hpp"

#include <algorithm>
#include <cmath>

#include "spikefuse/ops.hpp"

namespace spikefuse {

namespace {
thread_local GradMode g_grad_mode = GradMode::kSurrogate;
}

GradMode grad_mode() { return g_grad_mode; }

GradModeGuard::GradModeGuard(GradMode mode) : previous_(g_grad_mode) { g_grad_mode = mode; }
GradModeGuard::~GradModeGuard() { g_grad_mode = previous_; }

double surrogate_grad(double u, double threshold, double width) {
  return std::abs(u - threshold) <= width / 2.0 ? 1.0 : 0.0;
}

LifStepResult lif_step(std::span<const double> v, std::span<const double> input, const LifParams& p) {
  if (v.size() != input.size()) throw InvalidInput("lif_step: membrane and input sizes differ");
  if (!(p.tau > 0.0)) throw InvalidInput("lif_step: tau must be positive");
  LifStepResult r{std::vector<double>(v.size()), std::vector<double>(v.size())};
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(input[i])) throw NumericError("lif_step: non-finite input");
    const double vm = v[i] + (input[i] - v[i]) / p.tau;
    const bool fired = vm > p.v_threshold;
    r.spikes[i] = fired ? 1.0 : 0.0;
    r.v_next[i] = fired ? p.v_reset : vm;
  }
  return r;
}

Tensor spike(const Tensor& u, double threshold) {
  std::vector<double> out(u.size());
  auto uv = u.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = uv[i] > threshold ? 1.0 : 0.0;
  const bool exact = grad_mode() == GradMode::kExact;
  return make_result("spike", u.shape(), std::move(out), {u}, [threshold, exact](detail::Node& self) {
    if (exact) return;
    auto& p = *self.parents[0];
    auto& g = p.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * surrogate_grad(p.value[i], threshold);
  });
}

Tensor lif(const Tensor& x, const Tensor& tau, double v_threshold, double v_reset) {
  if (x.rank() < 2) throw InvalidInput("lif: input must be [B, T, ...]");
  if (tau.size() != 1) throw InvalidInput("lif: tau must be a scalar");
  const double t = tau.values()[0];
  if (!(t > 0.0)) throw InvalidInput("lif: tau must be positive");
  const std::size_t batch = x.dim(0), steps = x.dim(1), inner = x.size() / (batch * steps);
  auto xv = x.values();
  std::vector<double> out(x.size());
  // membrane before each step and mid-step potential, kept for the backward sweep
  std::vector<double> v_prev(x.size()), v_mid(x.size());
  std::vector<double> v(inner);
  for (std::size_t b = 0; b < batch; ++b) {
    std::fill(v.begin(), v.end(), v_reset);
    for (std::size_t s = 0; s < steps; ++s) {
      const std::size_t base = (b * steps + s) * inner;
      for (std::size_t i = 0; i < inner; ++i) {
        const double in = xv[base + i];
        if (!std::isfinite(in)) throw NumericError("lif: non-finite input");
        const double vm = v[i] + (in - v[i]) / t;
        v_prev[base + i] = v[i];
        v_mid[base + i] = vm;
        const bool fired = vm > v_threshold;
        out[base + i] = fired ? 1.0 : 0.0;
        v[i] = fired ? v_reset : vm;
      }
    }
  }
  const bool exact = grad_mode() == GradMode::kExact;
  return make_result(
      "lif", x.shape(), std::move(out), {x, tau},
      [v_prev = std::move(v_prev), v_mid = std::move(v_mid), batch, steps, inner, t, v_threshold,
       exact](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pt = *self.parents[1];
        std::vector<double> gv(inner);
        double gtau = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
          std::fill(gv.begin(), gv.end(), 0.0);
          for (std::size_t s = steps; s-- > 0;) {
            const std::size_t base = (b * steps + s) * inner;
            for (std::size_t i = 0; i < inner; ++i) {
              const double fired = self.value[base + i];
              const double sg = exact ? 0.0 : surrogate_grad(v_mid[base + i], v_threshold);
              const double gvm = self.grad[base + i] * sg + gv[i] * (1.0 - fired);
              const double in = px.value[base + i];
              if (px.requires_grad) px.grad_buffer()[base + i] += gvm / t;
              gtau += gvm * (-(in - v_prev[base + i]) / (t * t));
              gv[i] = gvm * (1.0 - 1.0 / t);
            }
          }
        }
        if (pt.requires_grad) pt.grad_buffer()[0] += gtau;
      });
}

void SpikeRecorder::record(const std::string& name, const Tensor& spikes) {
  auto& e = entries_[name];
  for (double v : spikes.values()) {
    if (v == 1.0)
      e.ones += 1.0;
    else if (v != 0.0)
      ++e.non_binary;
  }
  e.total += static_cast<double>(spikes.size());
}

bool SpikeRecorder::all_binary() const { return non_binary() == 0; }

std::size_t SpikeRecorder::non_binary() const {
  std::size_t n = 0;
  for (const auto& [_, e] : entries_) n += e.non_binary;
  return n;
}

double SpikeRecorder::firing_rate(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end() || it->second.total == 0.0) return 0.0;
  return it->second.ones / it->second.total;
}

void ParamSet::add_param(const std::string& name, Tensor t) { entries_.push_back({name, std::move(t), true}); }

void ParamSet::add_buffer(const std::string& name, Tensor t) { entries_.push_back({name, std::move(t), false}); }

std::vector<Tensor> ParamSet::params() const {
  std::vector<Tensor> out;
  for (const auto& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

std::size_t ParamSet::param_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.tensor.size();
  return n;
}

const ParamSet::Entry* ParamSet::find(const std::string& name) const {
  for (const auto& e : entries_)
    if (e.name == name) return &e;
  return nullptr;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng, double gain) {
  const double bound = gain / std::sqrt(static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_volume(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), true);
}

Linear::Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, bool bias)
    : name_(std::move(name)), in_(in), out_(out) {
  if (in == 0 || out == 0) throw InvalidInput("Linear '" + name_ + "': dimensions must be positive");
  weight_ = init_uniform({in, out}, in, rng);
  if (bias) bias_ = Tensor::zeros({out}, true);
}

Tensor Linear::forward(const Tensor& x, const ForwardContext& ctx, LayerKind kind) const {
  if (x.shape().back() != in_)
    throw InvalidInput("Linear '" + name_ + "': expected last axis " + std::to_string(in_) + ", got " +
                       shape_str(x.shape()));
  if (ctx.profiler && x.rank() >= 3) {
    const double rows = static_cast<double>(x.size() / in_);
    double active = 0.0;
    for (double v : x.values()) active += v != 0.0 ? 1.0 : 0.0;
    ctx.profiler->record(name_, kind, 2.0 * rows * double(in_) * double(out_), active, double(x.size()), x.dim(0),
                         x.dim(1));
  }
  return bias_.defined() ? linear(x, weight_, bias_) : linear(x, weight_);
}

void Linear::collect(ParamSet& ps) const {
  ps.add_param(name_ + ".weight", weight_);
  if (bias_.defined()) ps.add_param(name_ + ".bias", bias_);
}

BatchNorm::BatchNorm(std::string name, std::size_t channels) : name_(std::move(name)), channels_(channels) {
  gamma_ = Tensor::full({channels}, 1.0, true);
  beta_ = Tensor::zeros({channels}, true);
  running_mean_ = Tensor::zeros({channels});
  running_var_ = Tensor::full({channels}, 1.0);
}

Tensor BatchNorm::forward(const Tensor& x, const ForwardContext& ctx) {
  if (!enabled) return x;
  const std::size_t c = channels_;
  if (x.shape().back() != c) throw InvalidInput("BatchNorm '" + name_ + "': channel mismatch " + shape_str(x.shape()));
  const std::size_t rows = x.size() / c;
  auto xv = x.values();
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  if (ctx.training) {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) mu[j] += xv[r * c + j];
    for (auto& m : mu) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double d = xv[r * c + j] - mu[j];
        var[j] += d * d;
      }
    for (auto& v : var) v /= static_cast<double>(rows);
    if (ctx.update_stats) {
      auto rm = running_mean_.mutable_values(), rv = running_var_.mutable_values();
      const double unbias = rows > 1 ? static_cast<double>(rows) / static_cast<double>(rows - 1) : 1.0;
      for (std::size_t j = 0; j < c; ++j) {
        rm[j] = (1.0 - momentum) * rm[j] + momentum * mu[j];
        rv[j] = (1.0 - momentum) * rv[j] + momentum * var[j] * unbias;
      }
    }
  } else {
    std::copy(running_mean_.values().begin(), running_mean_.values().end(), mu.begin());
    std::copy(running_var_.values().begin(), running_var_.values().end(), var.begin());
  }
  std::vector<double> inv_std(c), xhat(x.size()), out(x.size());
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + eps);
  auto gv = gamma_.values(), bv = beta_.values();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c; ++j) {
      const std::size_t i = r * c + j;
      xhat[i] = (xv[i] - mu[j]) * inv_std[j];
      out[i] = gv[j] * xhat[i] + bv[j];
    }
  const bool batch_stats = ctx.training;
  return make_result(
      "batch_norm", x.shape(), std::move(out), {x, gamma_, beta_},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, c, batch_stats](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) {
            const double dy = self.grad[r * c + j];
            sum_dy[j] += dy;
            sum_dy_xhat[j] += dy * xhat[r * c + j];
          }
        if (pg.requires_grad) {
          auto& g = pg.grad_buffer();
          for (std::size_t j = 0; j < c; ++j) g[j] += sum_dy_xhat[j];
        }
        if (pb.requires_grad) {
          auto& g = pb.grad_buffer();
          for (std::size_t j = 0; j < c; ++j) g[j] += sum_dy[j];
        }
        if (!px.requires_grad) return;
        auto& gx = px.grad_buffer();
        const double n = static_cast<double>(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t j = 0; j < c; ++j) {
            const std::size_t i = r * c + j;
            const double gamma = pg.value[j];
            const double dy = self.grad[i];
            if (batch_stats)
              gx[i] += gamma * inv_std[j] * (dy - sum_dy[j] / n - xhat[i] * sum_dy_xhat[j] / n);
            else
              gx[i] += gamma * inv_std[j] * dy;
          }
      });
}

void BatchNorm::collect(ParamSet& ps) const {
  ps.add_param(name_ + ".gamma", gamma_);
  ps.add_param(name_ + ".beta", beta_);
  ps.add_buffer(name_ + ".running_mean", running_mean_);
  ps.add_buffer(name_ + ".running_var", running_var_);
}

LifNeuron::LifNeuron(std::string name, LifParams p) : name_(std::move(name)), params_(p) {
  if (!(p.tau > 0.0)) throw InvalidInput("LifNeuron '" + name_ + "': tau must be positive");
  tau_ = Tensor::scalar(p.tau, true);
}

Tensor LifNeuron::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor s = lif(x, tau_, params_.v_threshold, params_.v_reset);
  ctx.note_spikes(name_, s);
  return s;
}

void LifNeuron::collect(ParamSet& ps) const { ps.add_param(name_ + ".tau", tau_); }

void LifNeuron::clamp_tau() {
  auto v = tau_.mutable_values();
  v[0] = std::max(v[0], kMinTau);
}

LpBnSn::LpBnSn(std::string name, std::size_t in, std::size_t out, Rng& rng, LayerKind kind)
    : lp(name + ".lp", in, out, rng), bn(name + ".bn", out), sn(name + ".sn"), name_(std::move(name)), kind_(kind) {}

Tensor LpBnSn::pre(const Tensor& x, const ForwardContext& ctx) { return bn.forward(lp.forward(x, ctx, kind_), ctx); }

Tensor LpBnSn::forward(const Tensor& x, const ForwardContext& ctx) { return sn.forward(pre(x, ctx), ctx); }

void LpBnSn::collect(ParamSet& ps) const {
  lp.collect(ps);
  bn.collect(ps);
  sn.collect(ps);
}

void LpBnSn::clamp() { sn.clamp_tau(); }

Tensor dropout(const Tensor& x, double p, const ForwardContext& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  if (p >= 1.0) throw InvalidInput("dropout: probability must be below 1");
  if (!ctx.rng) throw InvalidInput("dropout: training requires a random generator");
  std::bernoulli_distribution keep(1.0 - p);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = keep(*ctx.rng) ? 1.0 / (1.0 - p) : 0.0;
  return mul_const(x, mask);
}

bool is_binary(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](double v) { return v == 0.0 || v == 1.0; });
}

double density(const Tensor& t) {
  double n = 0.0;
  for (double v : t.values()) n += v != 0.0 ? 1.0 : 0.0;
  return n / static_cast<double>(t.size());
}

}  // namespace spikefuse
