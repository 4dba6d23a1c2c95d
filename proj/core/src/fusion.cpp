#include "spikefuse/fusion.hpp"

#include <algorithm>

#include "spikefuse/ops.hpp"

namespace spikefuse {

namespace {

void check_pair(const Tensor& s, const Tensor& e) {
  if (s.rank() != 4 || e.rank() != 4 || s.dim(0) != e.dim(0) || s.dim(1) != e.dim(1) || s.dim(3) != e.dim(3))
    throw InvalidInput("fusion: modalities " + shape_str(s.shape()) + " and " + shape_str(e.shape()) +
                       " are not compatible");
}

}  // namespace

AlignedFeatures pad_modalities(const Tensor& skeleton, const Tensor& event) {
  check_pair(skeleton, event);
  const std::size_t tokens = std::max(skeleton.dim(2), event.dim(2));
  return {pad_tokens(skeleton, tokens), pad_tokens(event, tokens)};
}

AlignedFeatures align_modalities(const Tensor& skeleton, const Tensor& event, LpBnSn& shared,
                                 const ForwardContext& ctx) {
  check_pair(skeleton, event);
  return pad_modalities(shared.forward(skeleton, ctx), shared.forward(event, ctx));
}

Tensor direct_add_fuse(const AlignedFeatures& a) { return spike(add(a.skeleton, a.event)); }

SpikingCrossMamba::SpikingCrossMamba(const std::string& name, std::size_t dim, std::size_t state, Rng& rng)
    : sp(name + ".sp", dim, dim, rng),
      ssp(name + ".ssp", dim, state, rng),
      bn(name + ".bn", dim),
      sn(name + ".sn"),
      name_(name) {}

Tensor SpikingCrossMamba::interaction(const AlignedFeatures& a, const ForwardContext& ctx) {
  if (a.skeleton.shape() != a.event.shape()) throw InvalidInput("SCM: aligned shapes differ");
  const Tensor& gate_in = swapped ? a.event : a.skeleton;
  const Tensor& state_in = swapped ? a.skeleton : a.event;
  Tensor g = sp.forward(gate_in, ctx);
  Tensor y = ssp.forward(state_in, ctx);
  const std::size_t tokens = g.dim(2), c = g.dim(3);
  if (ctx.profiler)
    ctx.profiler->record(name_ + ".cross", LayerKind::kSnnFc, 4.0 * double(g.dim(0) * g.dim(1) * tokens * c * c),
                         density(g) * double(g.size()), double(g.size()), g.dim(0), g.dim(1));
  return scale(apply_gram(g, token_gram(g, y)), 1.0 / static_cast<double>(tokens));
}

Tensor SpikingCrossMamba::forward(const AlignedFeatures& a, const ForwardContext& ctx) {
  Tensor z = sn.forward(bn.forward(interaction(a, ctx), ctx), ctx);
  Tensor out = spike(add(z, swapped ? a.skeleton : a.event));
  ctx.note_spikes(name_ + ".out", out);
  return out;
}

void SpikingCrossMamba::collect(ParamSet& ps) const {
  sp.collect(ps);
  ssp.collect(ps);
  bn.collect(ps);
  sn.collect(ps);
}

void SpikingCrossMamba::clamp() {
  sp.clamp();
  sn.clamp_tau();
}

}  // namespace spikefuse
