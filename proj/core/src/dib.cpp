#include "spikefuse/dib.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spikefuse/ops.hpp"

namespace spikefuse {

double bernoulli_kl(double p, double q) {
  return p * std::log(p / q) + (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
}

Tensor discrete_kl(const Tensor& p, const Tensor& q) {
  const std::size_t c = p.shape().back();
  const bool per_channel = q.size() == c && q.shape() != p.shape();
  if (!per_channel && q.shape() != p.shape())
    throw InvalidInput("discrete_kl: prior " + shape_str(q.shape()) + " does not match " + shape_str(p.shape()));
  auto pv = p.values(), qv = q.values();
  for (double v : pv)
    if (!(v > 0.0 && v < 1.0)) throw InvalidInput("discrete_kl: posterior outside (0, 1); clamp first");
  for (double v : qv)
    if (!(v > 0.0 && v < 1.0)) throw InvalidInput("discrete_kl: prior outside (0, 1); clamp first");
  const double n = static_cast<double>(p.size());
  double total = 0.0;
  std::vector<double> dkl(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double qi = per_channel ? qv[i % c] : qv[i];
    total += bernoulli_kl(pv[i], qi);
    dkl[i] = std::log(pv[i] / qi) - std::log((1.0 - pv[i]) / (1.0 - qi));
  }
  return make_result("discrete_kl", {1}, {total / n}, {p}, [dkl = std::move(dkl), n](detail::Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * dkl[i] / n;
  });
}

Tensor cosine_retention(const Tensor& a, const Tensor& b, double eps) {
  if (a.size() != b.size() || a.rank() < 1 || b.rank() < 1 || a.dim(0) != b.dim(0))
    throw InvalidInput("cosine_retention: " + shape_str(a.shape()) + " and " + shape_str(b.shape()) + " differ");
  const std::size_t batch = a.dim(0), per = a.size() / batch;
  auto av = a.values(), bv = b.values();
  std::vector<double> na(batch), nb(batch), cos(batch);
  double total = 0.0;
  for (std::size_t s = 0; s < batch; ++s) {
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
      saa += av[i] * av[i];
      sbb += bv[i] * bv[i];
      sab += av[i] * bv[i];
    }
    na[s] = std::sqrt(saa);
    nb[s] = std::sqrt(sbb);
    cos[s] = sab / ((na[s] + eps) * (nb[s] + eps));
    total += cos[s];
  }
  return make_result(
      "cosine_retention", {1}, {total / double(batch)}, {a, b},
      [na, nb, batch, per, eps](detail::Node& self) {
        const double scale = self.grad[0] / double(batch);
        for (int side = 0; side < 2; ++side) {
          auto& me = *self.parents[side];
          auto& other = *self.parents[1 - side];
          if (!me.requires_grad) continue;
          auto& g = me.grad_buffer();
          const auto& nm = side == 0 ? na : nb;
          const auto& no = side == 0 ? nb : na;
          for (std::size_t s = 0; s < batch; ++s) {
            const double dm = nm[s] + eps, dother = no[s] + eps;
            double dot = 0.0;
            for (std::size_t i = s * per; i < (s + 1) * per; ++i) dot += me.value[i] * other.value[i] / dother;
            for (std::size_t i = s * per; i < (s + 1) * per; ++i) {
              double d = other.value[i] / dother / dm;
              if (nm[s] > 0.0) d -= dot * me.value[i] / (nm[s] * dm * dm);
              g[i] += scale * d;
            }
          }
        }
      });
}

Tensor xor_straight_through(const Tensor& b, const Tensor& pi, std::span<const double> gamma) {
  if (gamma.size() != b.size() || pi.shape() != b.shape())
    throw InvalidInput("xor_straight_through: mask, probabilities and code must share a shape");
  std::vector<double> out(b.size());
  auto bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    if ((bv[i] != 0.0 && bv[i] != 1.0) || (gamma[i] != 0.0 && gamma[i] != 1.0))
      throw InvalidInput("xor_straight_through: code and mask must be binary");
    out[i] = bv[i] != gamma[i] ? 1.0 : 0.0;
  }
  std::vector<double> mask(gamma.begin(), gamma.end());
  const bool exact = grad_mode() == GradMode::kExact;
  return make_result("xor", b.shape(), std::move(out), {b, pi}, [mask = std::move(mask), exact](detail::Node& self) {
    auto& pb = *self.parents[0];
    auto& pp = *self.parents[1];
    if (pb.requires_grad) {
      auto& g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += exact ? self.grad[i] * (1.0 - 2.0 * mask[i]) : self.grad[i];
    }
    if (pp.requires_grad && !exact) {
      auto& g = pp.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * (1.0 - 2.0 * pb.value[i]);
    }
  });
}

double ema_step(double q, double batch_mean, double momentum, double delta) {
  const double next = momentum * q + (1.0 - momentum) * batch_mean;
  return std::clamp(next, delta, 1.0 - delta);
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double probit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("probit: probability must lie in (0, 1)");
  // Acklam's rational approximation
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                 1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                 6.680131188771972e+01, -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                 -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                 3.754408661907416e+00};
  constexpr double lo = 0.02425, hi = 1.0 - lo;
  double x;
  if (p < lo) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= hi) {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(x * x / 2.0);
  return x - u / (1.0 + x * u / 2.0);
}

GaussianKlReference min_gaussian_kl_reference(double pi) {
  GaussianKlReference r;
  r.pi = pi;
  r.a = probit(pi);
  const double s = 1.0 + r.a * r.a;
  r.min_kl = 0.5 * std::log(s);
  r.sigma2_star = 1.0 / s;
  r.mu_star = r.a / std::sqrt(s);  // mu = a sigma at the optimum
  return r;
}

DibStage::DibStage(const std::string& name, std::size_t in, std::size_t code, std::size_t target_dim,
                   const DibConfig& cfg, Rng& rng)
    : encoder(name + ".enc", in, code, rng),
      head(name + ".head", code, code, rng),
      head_bn(name + ".head_bn", code),
      sampler(name + ".sampler", code, code, rng),
      psi(name + ".psi", code, target_dim, rng),
      psi_out(name + ".psi_out", target_dim, target_dim, rng),
      prior(Tensor::full({code}, 0.5)),
      momentum(cfg.momentum),
      name_(name) {
  for (auto& v : sampler.bias().mutable_values()) v = cfg.sampler_bias;
}

BottleneckStage DibStage::encode(const Tensor& x, const ForwardContext& ctx) {
  BottleneckStage st;
  st.b = encoder.forward(x, ctx);
  st.p_hat = spikefuse::clamp(sigmoid(head_bn.forward(head.forward(st.b, ctx), ctx)), kProbClamp, 1.0 - kProbClamp);
  const std::size_t code = prior.size();
  if (ctx.training && ctx.update_stats) {
    std::vector<double> mean(code, 0.0);
    auto pv = st.p_hat.values();
    for (std::size_t i = 0; i < pv.size(); ++i) mean[i % code] += pv[i];
    auto q = prior.mutable_values();
    const double rows = static_cast<double>(pv.size() / code);
    for (std::size_t j = 0; j < code; ++j) q[j] = ema_step(q[j], mean[j] / rows, momentum);
  }
  st.q_hat = prior.detach();
  st.kl = discrete_kl(st.p_hat, st.q_hat);
  if (ctx.sampling == SamplingMode::kBypass) {
    st.b_tilde = st.b;
  } else {
    st.pi = sigmoid(sampler.forward(st.b.detach(), ctx));
    std::vector<double> mask(st.b.size());
    if (ctx.sampling == SamplingMode::kReplay) {
      if (!ctx.masks || !ctx.masks->count(name_)) throw InvalidInput("DIB replay: no stored mask for " + name_);
      mask = ctx.masks->at(name_);
      if (mask.size() != st.b.size()) throw InvalidInput("DIB replay: stored mask has the wrong size");
    } else {
      if (!ctx.rng) throw InvalidInput("DIB sampling requires a random generator");
      std::uniform_real_distribution<double> unif(0.0, 1.0);
      auto pv = st.pi.values();
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = unif(*ctx.rng) < pv[i] ? 1.0 : 0.0;
      if (ctx.sampling == SamplingMode::kRecord && ctx.masks) (*ctx.masks)[name_] = mask;
    }
    st.gamma = Tensor::from(st.b.shape(), mask);
    st.b_tilde = xor_straight_through(st.b, st.pi, mask);
  }
  ctx.note_spikes(name_ + ".b_tilde", st.b_tilde);
  return st;
}

Tensor DibStage::retain(const Tensor& b_tilde, const ForwardContext& ctx) {
  return psi_out.forward(psi.forward(b_tilde, ctx), ctx);
}

void DibStage::collect(ParamSet& ps) const {
  encoder.collect(ps);
  head.collect(ps);
  head_bn.collect(ps);
  sampler.collect(ps);
  psi.collect(ps);
  psi_out.collect(ps);
  ps.add_buffer(name_ + ".prior", prior);
}

void DibStage::clamp() {
  encoder.clamp();
  psi.clamp();
}

Tensor dib_loss(const Tensor& kl, const Tensor& cos, double lambda) { return sub(kl, scale(cos, lambda)); }

Tensor total_loss(const Tensor& logits, std::span<const int> labels, const Tensor& dib1, const Tensor& dib2,
                  double alpha) {
  Tensor ce = softmax_cross_entropy(logits, labels);
  if (alpha == 0.0) return ce;
  return add(ce, scale(add(dib1, dib2), alpha));
}

DiscretizedBottleneck::DiscretizedBottleneck(const std::string& name, std::size_t dim, const DibConfig& c, Rng& rng)
    : stage1(name + ".stage1", dim, dim, dim, c, rng), stage2(name + ".stage2", dim, dim / 2, dim, c, rng), cfg(c) {
  if (dim < 2) throw InvalidInput("DIB: feature dimension must be at least 2");
  if (cfg.alpha < 0.0 || cfg.lambda1 < 0.0 || cfg.lambda2 < 0.0) throw InvalidInput("DIB: weights must be >= 0");
  if (!(cfg.momentum > 0.0 && cfg.momentum < 1.0)) throw InvalidInput("DIB: momentum must lie in (0, 1)");
}

DibOutput DiscretizedBottleneck::forward(const Tensor& x, const Tensor& skeleton_target, const Tensor& event_target,
                                         const ForwardContext& ctx) {
  DibOutput out;
  out.stage1 = stage1.encode(x, ctx);
  out.stage2 = stage2.encode(out.stage1.b_tilde, ctx);
  const Tensor& t1 = cfg.swap_targets ? event_target : skeleton_target;
  const Tensor& t2 = cfg.swap_targets ? skeleton_target : event_target;
  out.cos1 = cosine_retention(stage1.retain(out.stage1.b_tilde, ctx), t1.detach());
  out.cos2 = cosine_retention(stage2.retain(out.stage2.b_tilde, ctx), t2.detach());
  out.loss1 = dib_loss(out.stage1.kl, out.cos1, cfg.lambda1);
  out.loss2 = dib_loss(out.stage2.kl, out.cos2, cfg.lambda2);
  return out;
}

void DiscretizedBottleneck::collect(ParamSet& ps) const {
  stage1.collect(ps);
  stage2.collect(ps);
}

void DiscretizedBottleneck::clamp() {
  stage1.clamp();
  stage2.clamp();
}

Classifier::Classifier(const std::string& name, std::size_t in, std::size_t classes, Rng& rng)
    : fc(name + ".fc", in, classes, rng) {}

Tensor Classifier::forward(const Tensor& x, const ForwardContext& ctx) const {
  return fc.forward(dropout(mean_tokens(x), ctx.dropout, ctx), ctx);
}

void Classifier::collect(ParamSet& ps) const { fc.collect(ps); }

}  // namespace spikefuse
