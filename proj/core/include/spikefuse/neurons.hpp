#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "spikefuse/energy.hpp"
#include "spikefuse/tensor.hpp"

namespace spikefuse {

using Rng = std::mt19937_64;

/// How gradients cross a spike threshold. kExact treats the step as flat (zero
/// gradient), which is what central differences see away from the threshold.
enum class GradMode { kSurrogate, kExact };

GradMode grad_mode();

class GradModeGuard {
 public:
  explicit GradModeGuard(GradMode mode);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  GradMode previous_;
};

inline constexpr double kSurrogateWidth = 1.0;
inline constexpr double kMinTau = 0.05;

struct LifParams {
  double tau = 2.0;
  double v_threshold = 0.5;
  double v_reset = 0.0;
};

/// Rectangular surrogate: 1 inside |u - threshold| <= width/2, else 0.
double surrogate_grad(double u, double threshold, double width = kSurrogateWidth);

struct LifStepResult {
  std::vector<double> v_next;
  std::vector<double> spikes;
};

/// One synchronous update of a population of LIF neurons (no gradient recording).
LifStepResult lif_step(std::span<const double> v, std::span<const double> input, const LifParams& p);

/// Stateless threshold H(u - threshold) with the rectangular surrogate.
Tensor spike(const Tensor& u, double threshold = 0.5);

/// LIF over axis 1 of x [B, T, ...] with a learnable scalar tau; returns the spike train.
/// The membrane starts at v_reset and is hard-reset after each spike; the reset
/// itself is not differentiated.
Tensor lif(const Tensor& x, const Tensor& tau, double v_threshold = 0.5, double v_reset = 0.0);

/// Counts spikes per named layer during a forward pass and checks binary purity.
class SpikeRecorder {
 public:
  struct Entry {
    double ones = 0.0;
    double total = 0.0;
    std::size_t non_binary = 0;
  };

  void record(const std::string& name, const Tensor& spikes);
  bool all_binary() const;
  std::size_t non_binary() const;
  double firing_rate(const std::string& name) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }
  void clear() { entries_.clear(); }

 private:
  std::map<std::string, Entry> entries_;
};

/// Which Bernoulli masks the sampler uses.
enum class SamplingMode {
  kDraw,    // fresh draws from ctx.rng
  kRecord,  // fresh draws, stored in ctx.masks
  kReplay,  // masks read back from ctx.masks
  kBypass,  // no mask (deterministic decoding)
};

struct ForwardContext {
  bool training = false;
  // BN running statistics and EMA priors move only when this is set.
  bool update_stats = false;
  double dropout = 0.0;
  SamplingMode sampling = SamplingMode::kBypass;
  Rng* rng = nullptr;
  SpikeRecorder* recorder = nullptr;
  OpProfiler* profiler = nullptr;
  std::map<std::string, std::vector<double>>* masks = nullptr;

  void note_spikes(const std::string& name, const Tensor& s) const {
    if (recorder) recorder->record(name, s);
  }
};

/// Named registry of learnable parameters and persistent buffers.
class ParamSet {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable;
  };

  void add_param(const std::string& name, Tensor t);
  void add_buffer(const std::string& name, Tensor t);

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> params() const;
  std::size_t param_count() const;
  const Entry* find(const std::string& name) const;

 private:
  std::vector<Entry> entries_;
};

/// Uniform(-bound, bound) initialized leaf with bound = gain / sqrt(fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, Rng& rng, double gain = 1.0);

class Linear {
 public:
  Linear() = default;
  Linear(std::string name, std::size_t in, std::size_t out, Rng& rng, bool bias = true);

  Tensor forward(const Tensor& x, const ForwardContext& ctx, LayerKind kind = LayerKind::kSnnFc) const;
  void collect(ParamSet& ps) const;

  std::size_t in() const { return in_; }
  std::size_t out() const { return out_; }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::size_t in_ = 0, out_ = 0;
  Tensor weight_, bias_;
};

/// Normalization over the last axis (channels), statistics over every other axis.
class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(std::string name, std::size_t channels);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;

  bool enabled = true;
  double momentum = 0.1;
  double eps = 1e-5;

  Tensor& gamma() { return gamma_; }
  Tensor& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  std::string name_;
  std::size_t channels_ = 0;
  Tensor gamma_, beta_, running_mean_, running_var_;
};

class LifNeuron {
 public:
  LifNeuron() = default;
  explicit LifNeuron(std::string name, LifParams p = {});

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(ParamSet& ps) const;
  void clamp_tau();

  Tensor& tau() { return tau_; }
  const LifParams& params() const { return params_; }

 private:
  std::string name_;
  LifParams params_;
  Tensor tau_;
};

/// Linear projection, batch norm, spiking neuron.
class LpBnSn {
 public:
  LpBnSn() = default;
  LpBnSn(std::string name, std::size_t in, std::size_t out, Rng& rng, LayerKind kind = LayerKind::kSnnFc);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  // Pre-activation after LP and BN.
  Tensor pre(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  Linear lp;
  BatchNorm bn;
  LifNeuron sn;

 private:
  std::string name_;
  LayerKind kind_ = LayerKind::kSnnFc;
};

/// Inverted dropout on a real-valued tensor; identity outside training.
Tensor dropout(const Tensor& x, double p, const ForwardContext& ctx);

/// Fraction of exactly-binary entries check.
bool is_binary(const Tensor& t);
double density(const Tensor& t);

}  // namespace spikefuse
