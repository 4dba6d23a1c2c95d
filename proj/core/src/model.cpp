#include "spikefuse/model.hpp"

#include "spikefuse/ops.hpp"

namespace spikefuse {

SpikeFuseNet::SpikeFuseNet(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  const auto& t = cfg.toggles;
  if (!t.sgn && !t.mamba) throw InvalidInput("model: at least one of sgn and mamba must be enabled");
  if (cfg.classes < 2) throw InvalidInput("model: need at least 2 classes");
  if (cfg.skeleton.dim != cfg.event.dim) throw InvalidInput("model: skeleton and event dims differ");
  if (cfg.skeleton.window != cfg.event.window) throw InvalidInput("model: skeleton and event windows differ");
  if (cfg.dropout < 0.0 || cfg.dropout >= 1.0) throw InvalidInput("model: dropout must lie in [0, 1)");
  const std::size_t d = cfg.skeleton.dim;
  if (t.sgn) skeleton = std::make_unique<SkeletonEncoder>("sgn", cfg.skeleton, rng);
  if (t.mamba) event = std::make_unique<EventEncoder>("mamba", cfg.event, rng);
  if (t.sse) {
    if (t.sgn) sse_skeleton = std::make_unique<SparseSemanticExtractor>("sse_s", d, cfg.sse, rng);
    if (t.mamba) sse_event = std::make_unique<SparseSemanticExtractor>("sse_e", d, cfg.sse, rng);
  }
  const bool fused = t.sgn && t.mamba;
  if (fused && (t.sse || t.scm)) align = std::make_unique<LpBnSn>("align", d, d, rng);
  if (fused && t.scm) scm = std::make_unique<SpikingCrossMamba>("scm", d, cfg.event.state, rng);
  if (t.dib) dib = std::make_unique<DiscretizedBottleneck>("dib", d, cfg.dib, rng);
  classifier = Classifier("head", dib ? dib->code_dim() : d, cfg.classes, rng);
}

ModelOutput SpikeFuseNet::forward(const Batch& batch, const ForwardContext& ctx) {
  if (batch.labels.empty()) throw InvalidInput("model: empty batch");
  Tensor s, e;
  if (skeleton) {
    s = skeleton->forward(batch.skeleton, ctx);
    if (sse_skeleton) s = sse_skeleton->forward(s, ctx);
  }
  if (event) {
    e = event->forward(batch.events, ctx);
    if (sse_event) e = sse_event->forward(e, ctx);
  }

  ModelOutput out;
  Tensor s_target, e_target;
  if (skeleton && event) {
    AlignedFeatures a = align ? align_modalities(s, e, *align, ctx) : pad_modalities(s, e);
    out.fused = scm ? scm->forward(a, ctx) : direct_add_fuse(a);
    ctx.note_spikes("fused", out.fused);
    s_target = a.skeleton;
    e_target = a.event;
  } else {
    out.fused = skeleton ? s : e;
    s_target = e_target = out.fused;
  }

  Tensor head_in = out.fused;
  if (dib) {
    out.dib = dib->forward(out.fused, s_target, e_target, ctx);
    head_in = out.dib->stage2.b_tilde;
  }
  ForwardContext head_ctx = ctx;
  head_ctx.dropout = cfg_.dropout;
  out.logits = classifier.forward(head_in, head_ctx);
  out.ce = softmax_cross_entropy(out.logits, batch.labels);
  out.loss = dib ? total_loss(out.logits, batch.labels, out.dib->loss1, out.dib->loss2, cfg_.dib.alpha) : out.ce;
  return out;
}

void SpikeFuseNet::collect(ParamSet& ps) const {
  if (skeleton) skeleton->collect(ps);
  if (event) event->collect(ps);
  if (sse_skeleton) sse_skeleton->collect(ps);
  if (sse_event) sse_event->collect(ps);
  if (align) align->collect(ps);
  if (scm) scm->collect(ps);
  if (dib) dib->collect(ps);
  classifier.collect(ps);
}

ParamSet SpikeFuseNet::parameters() const {
  ParamSet ps;
  collect(ps);
  return ps;
}

std::size_t SpikeFuseNet::param_count() const { return parameters().param_count(); }

void SpikeFuseNet::clamp() {
  if (skeleton) skeleton->clamp();
  if (event) event->clamp();
  if (sse_skeleton) sse_skeleton->clamp();
  if (sse_event) sse_event->clamp();
  if (align) align->clamp();
  if (scm) scm->clamp();
  if (dib) dib->clamp();
}

std::vector<LayerProfile> SpikeFuseNet::profile(const Batch& probe) {
  OpProfiler prof;
  ForwardContext ctx;
  ctx.profiler = &prof;
  NoGradGuard no_grad;
  forward(probe, ctx);
  return prof.profiles();
}

std::vector<std::pair<std::string, ModuleToggles>> ablation_chain() {
  std::vector<std::pair<std::string, ModuleToggles>> rows;
  ModuleToggles t{false, true, false, false, false};
  rows.emplace_back("mamba", t);
  t.sgn = true;
  rows.emplace_back("+sgn", t);
  t.sse = true;
  rows.emplace_back("+sse", t);
  t.scm = true;
  rows.emplace_back("+scm", t);
  t.dib = true;
  rows.emplace_back("+dib", t);
  return rows;
}

}  // namespace spikefuse
