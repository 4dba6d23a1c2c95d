#pragma once

#include "spikefuse/event_encoder.hpp"
#include "spikefuse/neurons.hpp"

namespace spikefuse {

struct AlignedFeatures {
  Tensor skeleton;  // [B, T, V', D]
  Tensor event;     // [B, T, V', D]
};

/// Same LP-BN-SN weights applied to both token-major modalities, then the smaller
/// token set is zero-padded to V' = max(V, V_p).
AlignedFeatures align_modalities(const Tensor& skeleton, const Tensor& event, LpBnSn& shared,
                                 const ForwardContext& ctx);

/// Zero-pads both inputs to a common token count without any projection.
AlignedFeatures pad_modalities(const Tensor& skeleton, const Tensor& event);

/// SN(x_s + x_e): the plain additive fusion used as an ablation baseline.
Tensor direct_add_fuse(const AlignedFeatures& a);

/// Skeleton features drive the selective path (a spike gate g), event features
/// drive the state-space path (y); they interact as g (g^T y) / V' per time step,
/// followed by BN and SN, and the event stream is added back as a residual.
class SpikingCrossMamba {
 public:
  SpikingCrossMamba() = default;
  SpikingCrossMamba(const std::string& name, std::size_t dim, std::size_t state, Rng& rng);

  Tensor forward(const AlignedFeatures& a, const ForwardContext& ctx);
  // Interaction term before BN.
  Tensor interaction(const AlignedFeatures& a, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  // Exchange the two modality roles (event drives the gate, skeleton the recurrence).
  bool swapped = false;

  LpBnSn sp;
  StateSpacePath ssp;
  BatchNorm bn;
  LifNeuron sn;

 private:
  std::string name_;
};

}  // namespace spikefuse
