#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spikefuse/data_forge.hpp"
#include "spikefuse/dib.hpp"
#include "spikefuse/energy.hpp"
#include "spikefuse/event_encoder.hpp"
#include "spikefuse/fusion.hpp"
#include "spikefuse/skeleton_encoder.hpp"
#include "spikefuse/sse.hpp"

namespace spikefuse {

/// sgn and mamba switch the skeleton and event branches; with only one of them
/// on, the remaining stream skips fusion. scm off falls back to direct addition.
struct ModuleToggles {
  bool sgn = true;
  bool mamba = true;
  bool sse = true;
  bool scm = true;
  bool dib = true;
};

struct ModelConfig {
  SkeletonEncoderConfig skeleton;
  EventEncoderConfig event;
  SseConfig sse;
  DibConfig dib;
  std::size_t classes = 60;
  double dropout = 0.1;
  ModuleToggles toggles;
};

struct ModelOutput {
  Tensor logits;
  Tensor loss;  // total objective
  Tensor ce;
  std::optional<DibOutput> dib;
  Tensor fused;
};

class SpikeFuseNet {
 public:
  SpikeFuseNet(const ModelConfig& cfg, Rng& rng);

  ModelOutput forward(const Batch& batch, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  ParamSet parameters() const;
  std::size_t param_count() const;
  // Projects constrained parameters (tau floor, adjacency positivity) after an update.
  void clamp();

  /// Eval-mode forward over a probe batch with an op profiler attached.
  std::vector<LayerProfile> profile(const Batch& probe);

  const ModelConfig& config() const { return cfg_; }

  std::unique_ptr<SkeletonEncoder> skeleton;
  std::unique_ptr<EventEncoder> event;
  std::unique_ptr<SparseSemanticExtractor> sse_skeleton, sse_event;
  std::unique_ptr<LpBnSn> align;
  std::unique_ptr<SpikingCrossMamba> scm;
  std::unique_ptr<DiscretizedBottleneck> dib;
  Classifier classifier;

 private:
  ModelConfig cfg_;
};

/// Table-2 style chain: event-only mamba, then adding sgn, sse, scm and dib in turn.
std::vector<std::pair<std::string, ModuleToggles>> ablation_chain();

}  // namespace spikefuse
