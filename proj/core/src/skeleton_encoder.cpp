#include "spikefuse/skeleton_encoder.hpp"

#include <algorithm>
#include <cmath>

#include "spikefuse/ops.hpp"

namespace spikefuse {

namespace {

// Kinect v2 layout, 1-based as usually published.
constexpr std::pair<int, int> kNtuBones[] = {{1, 2},   {2, 21},  {3, 21},  {4, 3},   {5, 21},  {6, 5},
                                             {7, 6},   {8, 7},   {9, 21},  {10, 9},  {11, 10}, {12, 11},
                                             {13, 1},  {14, 13}, {15, 14}, {16, 15}, {17, 1},  {18, 17},
                                             {19, 18}, {20, 19}, {22, 23}, {23, 8},  {24, 25}, {25, 12}};

// pelvis, chest, head, right elbow, right hand, left elbow, left hand, right foot, left foot
constexpr std::pair<int, int> kToyBones[] = {{0, 1}, {1, 2}, {1, 3}, {3, 4}, {1, 5}, {5, 6}, {0, 7}, {0, 8}};

}  // namespace

std::vector<Bone> skeleton_bones(std::size_t joints) {
  if (joints == 0) throw InvalidInput("skeleton_bones: no joints");
  std::vector<Bone> bones;
  auto repeat = [&](std::size_t per, auto&& list, int base) {
    for (std::size_t p = 0; p < joints / per; ++p)
      for (auto [a, b] : list) bones.emplace_back(p * per + std::size_t(a - base), p * per + std::size_t(b - base));
  };
  if (joints % 25 == 0 && joints <= 50)
    repeat(25, kNtuBones, 1);
  else if (joints % 9 == 0 && joints <= 18)
    repeat(9, kToyBones, 0);
  else
    for (std::size_t j = 1; j < joints; ++j) bones.emplace_back(j - 1, j);
  return bones;
}

std::vector<double> normalized_adjacency(std::size_t joints, const std::vector<Bone>& bones) {
  const std::size_t n = joints;
  std::vector<double> a(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) a[i * n + i] = 1.0;
  for (auto [i, j] : bones) {
    if (i >= n || j >= n) throw InvalidInput("normalized_adjacency: bone references a missing joint");
    a[i * n + j] = a[j * n + i] = 1.0;
  }
  std::vector<double> deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) deg[i] += a[i * n + j];
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= std::sqrt(deg[i] * deg[j]);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a[i * n + j];
    for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= s;
  }
  return a;
}

void check_row_stochastic(const Tensor& adj) {
  if (adj.rank() != 2 || adj.dim(0) != adj.dim(1)) throw InvalidInput("adjacency must be square");
  const std::size_t n = adj.dim(0);
  auto v = adj.values();
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (v[i * n + j] < 0.0) throw InvalidInput("adjacency has a negative entry");
      s += v[i * n + j];
    }
    if (std::abs(s - 1.0) > 1e-9) throw InvalidInput("adjacency row " + std::to_string(i) + " is not stochastic");
    if (!(v[i * n + i] > 0.0)) throw InvalidInput("adjacency is missing a self-loop");
  }
}

SpikingEmbedding::SpikingEmbedding(const std::string& name, const SkeletonEncoderConfig& cfg, Rng& rng)
    : block(name, cfg.in_channels, cfg.dim, rng, LayerKind::kFirstLp),
      spe(Tensor::zeros({cfg.window, cfg.joints, cfg.dim}, true)),
      name_(name) {}

Tensor SpikingEmbedding::forward(const Tensor& x, const ForwardContext& ctx) {
  if (x.rank() != 4 || x.dim(1) != spe.dim(0) || x.dim(2) != spe.dim(1))
    throw InvalidInput("skeleton embedding: expected [B, " + std::to_string(spe.dim(0)) + ", " +
                       std::to_string(spe.dim(1)) + ", C], got " + shape_str(x.shape()));
  for (double v : x.values())
    if (!std::isfinite(v)) throw NumericError("skeleton embedding: non-finite coordinates");
  Tensor s = spike(add_leading(block.forward(x, ctx), spe));
  ctx.note_spikes(name_ + ".out", s);
  return s;
}

void SpikingEmbedding::collect(ParamSet& ps) const {
  block.collect(ps);
  ps.add_param(name_ + ".spe", spe);
}

void SpikingEmbedding::clamp() { block.clamp(); }

Tensor spiking_graph_conv(const Tensor& x, const Tensor& adj, const Linear& w_g, BatchNorm& bn, const LifNeuron& sn,
                          const ForwardContext& ctx) {
  check_row_stochastic(adj);
  return sn.forward(bn.forward(w_g.forward(mix_tokens(x, adj), ctx, LayerKind::kSnnConv), ctx), ctx);
}

SpikingGraphConv::SpikingGraphConv(const std::string& name, std::size_t joints, std::size_t dim, Rng& rng)
    : adj(Tensor::from({joints, joints}, normalized_adjacency(joints, skeleton_bones(joints)), true)),
      w_g(name + ".w_g", dim, dim, rng, false),
      bn(name + ".bn", dim),
      sn(name + ".sn"),
      name_(name) {}

Tensor SpikingGraphConv::adjacency() const { return row_normalize(adj); }

Tensor SpikingGraphConv::pre(const Tensor& x, const ForwardContext& ctx) const {
  if (x.rank() != 4 || x.dim(2) != adj.dim(0))
    throw InvalidInput("graph conv: adjacency dimension does not match " + shape_str(x.shape()));
  Tensor a = adjacency();
  if (ctx.profiler) {
    const double n = double(adj.dim(0)), c = double(x.dim(3));
    ctx.profiler->record(name_ + ".mix", LayerKind::kSnnConv, 2.0 * double(x.dim(0) * x.dim(1)) * n * n * c,
                         density(x) * double(x.size()), double(x.size()), x.dim(0), x.dim(1));
  }
  return w_g.forward(mix_tokens(x, a), ctx, LayerKind::kSnnConv);
}

Tensor SpikingGraphConv::forward(const Tensor& x, const ForwardContext& ctx) {
  return sn.forward(bn.forward(pre(x, ctx), ctx), ctx);
}

void SpikingGraphConv::collect(ParamSet& ps) const {
  ps.add_param(name_ + ".adj", adj);
  w_g.collect(ps);
  bn.collect(ps);
  sn.collect(ps);
}

void SpikingGraphConv::project() {
  sn.clamp_tau();
  const std::size_t n = adj.dim(0);
  auto v = adj.mutable_values();
  // rows are normalized in forward, so only positivity is enforced here
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      v[i * n + j] = std::max(v[i * n + j], 0.0);
      if (i == j) v[i * n + j] = std::max(v[i * n + j], 1e-3);
    }
}

SpikingSelfAttention::SpikingSelfAttention(const std::string& name, std::size_t dim, double scale_, Rng& rng)
    : q(name + ".q", dim, dim, rng),
      k(name + ".k", dim, dim, rng),
      v(name + ".v", dim, dim, rng),
      out(name + ".out", dim, dim, rng),
      attn_sn(name + ".attn_sn"),
      scale(scale_),
      name_(name) {}

Tensor SpikingSelfAttention::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor qs = q.forward(x, ctx), ks = k.forward(x, ctx), vs = v.forward(x, ctx);
  if (ctx.profiler) {
    const double n = double(x.dim(2)), c = double(x.dim(3));
    const double active = density(ks) * double(ks.size()) + density(qs) * double(qs.size());
    ctx.profiler->record(name_ + ".attn", LayerKind::kSsa, 4.0 * double(x.dim(0) * x.dim(1)) * n * c * c, active,
                         2.0 * double(ks.size()), x.dim(0), x.dim(1));
  }
  Tensor attn = spikefuse::scale(apply_gram(qs, token_gram(ks, vs)), scale);
  return out.forward(attn_sn.forward(attn, ctx), ctx);
}

void SpikingSelfAttention::collect(ParamSet& ps) const {
  q.collect(ps);
  k.collect(ps);
  v.collect(ps);
  attn_sn.collect(ps);
  out.collect(ps);
}

void SpikingSelfAttention::clamp() {
  q.clamp();
  k.clamp();
  v.clamp();
  out.clamp();
  attn_sn.clamp_tau();
}

SpectralModule::SpectralModule(const std::string& name, std::size_t window, std::size_t dim,
                               const std::vector<std::size_t>& dils, Rng& rng)
    : dilations(dils), bn_out(name + ".bn_out", dim), sn_out(name + ".sn_out"), name_(name), window_(window) {
  if (dils.empty() || dim % dils.size() != 0)
    throw InvalidInput("spectral module: channel count must split evenly across branches");
  const std::size_t width = dim / dils.size();
  for (std::size_t b = 0; b < dils.size(); ++b) {
    const std::string bname = name + ".branch" + std::to_string(b);
    std::vector<Linear> t;
    for (int tap = 0; tap < 3; ++tap)
      t.emplace_back(bname + ".tap" + std::to_string(tap), dim, width, rng, false);
    taps.push_back(std::move(t));
    bn_real.emplace_back(bname + ".bn_real", width);
    bn_imag.emplace_back(bname + ".bn_imag", width);
  }
  mats_ = dft_matrices(window);
}

Tensor SpectralModule::transform(const Tensor& x, const ForwardContext& ctx) {
  if (x.rank() != 4 || x.dim(1) != window_)
    throw InvalidInput("spectral module: expected " + std::to_string(window_) + " time steps, got " +
                       shape_str(x.shape()));
  const std::size_t steps = x.dim(1);
  if (steps < *std::max_element(dilations.begin(), dilations.end()))
    throw InvalidInput("spectral module: window shorter than the largest dilation");
  if (ctx.profiler)
    ctx.profiler->record(name_ + ".dft", LayerKind::kFftIfft,
                         8.0 * double(steps * steps) * double(x.size() / steps), density(x) * double(x.size()),
                         double(x.size()), x.dim(0), steps);
  Tensor re = mix_time(x, mats_.fwd_cos, steps);
  Tensor im = mix_time(x, mats_.fwd_sin, steps);
  Tensor re_out = re, im_out = im;
  if (!identity_branches) {
    std::vector<Tensor> re_parts, im_parts;
    for (std::size_t b = 0; b < dilations.size(); ++b) {
      const auto d = static_cast<std::ptrdiff_t>(dilations[b]);
      auto conv = [&](const Tensor& z) {
        Tensor acc;
        for (int tap = 0; tap < 3; ++tap) {
          Tensor y = taps[b][tap].forward(shift_time(z, (tap - 1) * d), ctx, LayerKind::kSnnConv);
          acc = acc.defined() ? add(acc, y) : y;
        }
        return acc;
      };
      Tensor r = spike(bn_real[b].forward(conv(re), ctx));
      Tensor i = spike(bn_imag[b].forward(conv(im), ctx));
      ctx.note_spikes(name_ + ".branch" + std::to_string(b) + ".real", r);
      ctx.note_spikes(name_ + ".branch" + std::to_string(b) + ".imag", i);
      re_parts.push_back(r);
      im_parts.push_back(i);
    }
    re_out = concat_last(re_parts);
    im_out = concat_last(im_parts);
    if (ctx.profiler)
      ctx.profiler->record(name_ + ".idft", LayerKind::kFftIfft,
                           8.0 * double(steps * steps) * double(x.size() / steps),
                           density(re_out) * double(re_out.size()) + density(im_out) * double(im_out.size()),
                           2.0 * double(re_out.size()), x.dim(0), steps);
  }
  return add(mix_time(re_out, mats_.inv_cos, steps), mix_time(im_out, mats_.inv_sin, steps));
}

Tensor SpectralModule::forward(const Tensor& x, const Tensor& residual, const ForwardContext& ctx) {
  Tensor z = sn_out.forward(bn_out.forward(transform(x, ctx), ctx), ctx);
  Tensor s = spike(add(z, residual));
  ctx.note_spikes(name_ + ".out", s);
  return s;
}

void SpectralModule::collect(ParamSet& ps) const {
  for (std::size_t b = 0; b < taps.size(); ++b) {
    for (const auto& t : taps[b]) t.collect(ps);
    bn_real[b].collect(ps);
    bn_imag[b].collect(ps);
  }
  bn_out.collect(ps);
  sn_out.collect(ps);
}

void SpectralModule::clamp() { sn_out.clamp_tau(); }

SgnLayer::SgnLayer(const std::string& name, const SkeletonEncoderConfig& cfg, Rng& rng)
    : graph(name + ".graph", cfg.joints, cfg.dim, rng),
      ssa(name + ".ssa", cfg.dim, cfg.ssa_scale, rng),
      spectral(name + ".spectral", cfg.window, cfg.dim, cfg.dilations, rng) {}

Tensor SgnLayer::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor g = graph.forward(x, ctx);
  return spectral.forward(ssa.forward(g, ctx), g, ctx);
}

void SgnLayer::collect(ParamSet& ps) const {
  graph.collect(ps);
  ssa.collect(ps);
  spectral.collect(ps);
}

void SgnLayer::clamp() {
  graph.project();
  ssa.clamp();
  spectral.clamp();
}

SkeletonEncoder::SkeletonEncoder(const std::string& name, const SkeletonEncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.layers < 1) throw InvalidInput("skeleton encoder needs at least one layer");
  embed = SpikingEmbedding(name + ".embed", cfg, rng);
  for (std::size_t l = 0; l < cfg.layers; ++l) layers.emplace_back(name + ".layer" + std::to_string(l), cfg, rng);
}

Tensor SkeletonEncoder::forward(const Tensor& x, const ForwardContext& ctx) {
  if (x.rank() != 4 || x.dim(2) != cfg_.in_channels || x.dim(3) != cfg_.joints)
    throw InvalidInput("skeleton encoder: expected [B, T, " + std::to_string(cfg_.in_channels) + ", " +
                       std::to_string(cfg_.joints) + "], got " + shape_str(x.shape()));
  Tensor h = embed.forward(transpose_last2(x), ctx);
  for (auto& layer : layers) h = layer.forward(h, ctx);
  return h;
}

void SkeletonEncoder::collect(ParamSet& ps) const {
  embed.collect(ps);
  for (const auto& l : layers) l.collect(ps);
}

void SkeletonEncoder::clamp() {
  embed.clamp();
  for (auto& l : layers) l.clamp();
}

}  // namespace spikefuse
