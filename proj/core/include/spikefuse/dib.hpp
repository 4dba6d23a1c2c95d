#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "spikefuse/neurons.hpp"

namespace spikefuse {

inline constexpr double kProbClamp = 1e-6;
inline constexpr double kCosineEps = 1e-6;

/// Bernoulli KL for one pair: p log(p/q) + (1-p) log((1-p)/(1-q)).
double bernoulli_kl(double p, double q);

/// Mean Bernoulli KL between posteriors p [..., D] and a constant prior q that is
/// either [D] (per channel) or the same shape as p. Both must lie strictly inside (0, 1).
Tensor discrete_kl(const Tensor& p, const Tensor& q);

/// Normalized cosine <a/(|a|+eps), b/(|b|+eps)> per batch entry, averaged over the batch.
Tensor cosine_retention(const Tensor& a, const Tensor& b, double eps = kCosineEps);

/// B xor Gamma. Straight-through: the gradient reaching B is passed unchanged and
/// pi receives (1 - 2B) times the upstream gradient. Under GradMode::kExact the mask
/// is a constant: B gets (1 - 2 Gamma) and pi gets nothing.
Tensor xor_straight_through(const Tensor& b, const Tensor& pi, std::span<const double> gamma);

/// One EMA step q <- m q + (1 - m) mean, clamped to (delta, 1 - delta).
double ema_step(double q, double batch_mean, double momentum, double delta = kProbClamp);

/// Inverse standard normal CDF (rational approximation refined by one Halley step).
double probit(double p);
double normal_cdf(double x);

struct GaussianKlReference {
  double pi = 0.5;
  double a = 0.0;
  double min_kl = 0.0;
  double sigma2_star = 1.0;
  double mu_star = 0.0;
};

/// Minimum of KL(N(mu, s^2) || N(0, 1)) subject to P(z > 0) = pi, i.e. mu = a s with a = probit(pi).
GaussianKlReference min_gaussian_kl_reference(double pi);

struct DibConfig {
  double alpha = 0.05;
  double lambda1 = 0.5;
  double lambda2 = 0.6;
  double momentum = 0.99;
  double sampler_bias = -3.0;
  // Stage 1 retains the event stream and stage 2 the skeleton stream instead.
  bool swap_targets = false;
};

struct BottleneckStage {
  Tensor b;        // binary code
  Tensor p_hat;    // clamped posterior probabilities
  Tensor q_hat;    // prior used for the KL (detached copy)
  Tensor pi;       // flip probabilities (undefined when sampling is bypassed)
  Tensor gamma;    // sampled mask (undefined when sampling is bypassed)
  Tensor b_tilde;  // code passed downstream
  Tensor kl;
};

class DibStage {
 public:
  DibStage() = default;
  DibStage(const std::string& name, std::size_t in, std::size_t code, std::size_t target_dim, const DibConfig& cfg,
           Rng& rng);

  BottleneckStage encode(const Tensor& x, const ForwardContext& ctx);
  // psi(B~): spiking projection followed by a real-valued readout.
  Tensor retain(const Tensor& b_tilde, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  LpBnSn encoder;
  Linear head;
  BatchNorm head_bn;
  Linear sampler;
  LpBnSn psi;
  Linear psi_out;
  Tensor prior;  // [code]
  double momentum = 0.99;

 private:
  std::string name_;
};

struct DibOutput {
  BottleneckStage stage1, stage2;
  Tensor cos1, cos2;
  Tensor loss1, loss2;  // L_KL - lambda * cos
};

/// L_KL - lambda * cos.
Tensor dib_loss(const Tensor& kl, const Tensor& cos, double lambda);

/// Cross-entropy plus alpha (L_DIB1 + L_DIB2).
Tensor total_loss(const Tensor& logits, std::span<const int> labels, const Tensor& dib1, const Tensor& dib2,
                  double alpha);

class DiscretizedBottleneck {
 public:
  DiscretizedBottleneck() = default;
  DiscretizedBottleneck(const std::string& name, std::size_t dim, const DibConfig& cfg, Rng& rng);

  // x: fused spikes [B, T, V', D]; targets: aligned skeleton / event spikes of the same shape.
  DibOutput forward(const Tensor& x, const Tensor& skeleton_target, const Tensor& event_target,
                    const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();
  std::size_t code_dim() const { return stage2.head.out(); }

  DibStage stage1, stage2;
  DibConfig cfg;
};

/// Global average over time and tokens, dropout, linear layer to class logits.
class Classifier {
 public:
  Classifier() = default;
  Classifier(const std::string& name, std::size_t in, std::size_t classes, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(ParamSet& ps) const;

  Linear fc;
};

}  // namespace spikefuse
