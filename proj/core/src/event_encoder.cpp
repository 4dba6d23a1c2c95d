#include "spikefuse/event_encoder.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "spikefuse/ops.hpp"

namespace spikefuse {

namespace {

constexpr char kMagic[8] = {'S', 'F', 'E', 'V', 'T', '0', '0', '1'};

template <typename T>
void put_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T))) throw InvalidInput("event file truncated");
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(buf[i]) << (8 * i));
  return v;
}

}  // namespace

void write_events(std::ostream& os, const EventStream& stream) {
  os.write(kMagic, sizeof(kMagic));
  put_le<std::uint16_t>(os, stream.width);
  put_le<std::uint16_t>(os, stream.height);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(stream.events.size()));
  for (const auto& e : stream.events) {
    if (e.t < 0.0) throw InvalidInput("write_events: negative timestamp");
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(std::llround(e.t * 1e6)));
    put_le<std::uint16_t>(os, e.x);
    put_le<std::uint16_t>(os, e.y);
    put_le<std::uint8_t>(os, e.polarity > 0 ? 1 : 0);
  }
  if (!os) throw InvalidInput("write_events: stream failure");
}

EventStream read_events(std::istream& is) {
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw InvalidInput("event file: bad magic");
  EventStream s;
  s.width = get_le<std::uint16_t>(is);
  s.height = get_le<std::uint16_t>(is);
  const auto n = get_le<std::uint32_t>(is);
  s.events.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Event e;
    e.t = static_cast<double>(get_le<std::uint32_t>(is)) * 1e-6;
    e.x = get_le<std::uint16_t>(is);
    e.y = get_le<std::uint16_t>(is);
    e.polarity = get_le<std::uint8_t>(is) ? 1 : -1;
    s.events.push_back(e);
  }
  return s;
}

void write_events_file(const std::string& path, const EventStream& stream) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InvalidInput("cannot open '" + path + "' for writing");
  write_events(os, stream);
}

EventStream read_events_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidInput("cannot open '" + path + "'");
  return read_events(is);
}

BinnedEvents bin_events(const EventStream& stream, std::size_t steps, std::size_t height, std::size_t width,
                        double duration, double t0) {
  if (steps == 0 || height == 0 || width == 0) throw InvalidInput("bin_events: empty output shape");
  if (!(duration > 0.0)) throw InvalidInput("bin_events: duration must be positive");
  BinnedEvents out{Tensor::zeros({steps, 2, height, width}), 0};
  auto v = out.frames.mutable_values();
  double last = -INFINITY;
  for (const auto& e : stream.events) {
    if (e.t < last) throw InvalidInput("bin_events: timestamps must be sorted");
    last = e.t;
    const double rel = (e.t - t0) / duration * static_cast<double>(steps);
    if (rel < 0.0 || rel >= static_cast<double>(steps) || e.x >= width || e.y >= height) {
      ++out.skipped;
      continue;
    }
    const auto bin = static_cast<std::size_t>(rel);
    const std::size_t ch = e.polarity > 0 ? 0 : 1;
    v[((bin * 2 + ch) * height + e.y) * width + e.x] = 1.0;
  }
  return out;
}

Tensor patchify(const Tensor& frames, std::size_t patch) {
  if (frames.rank() != 5 || frames.dim(2) != 2) throw InvalidInput("patchify: expected [B, T, 2, H, W]");
  const std::size_t batch = frames.dim(0), steps = frames.dim(1), h = frames.dim(3), w = frames.dim(4);
  if (patch == 0 || h % patch != 0 || w % patch != 0)
    throw InvalidInput("patchify: frame " + std::to_string(h) + "x" + std::to_string(w) +
                       " is not divisible by patch size " + std::to_string(patch));
  const std::size_t gh = h / patch, gw = w / patch, tokens = gh * gw, feat = 2 * patch * patch;
  std::vector<double> out(batch * steps * tokens * feat);
  auto fv = frames.values();
  for (std::size_t bt = 0; bt < batch * steps; ++bt)
    for (std::size_t ch = 0; ch < 2; ++ch)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t token = (y / patch) * gw + x / patch;
          const std::size_t f = (ch * patch + y % patch) * patch + x % patch;
          out[(bt * tokens + token) * feat + f] = fv[((bt * 2 + ch) * h + y) * w + x];
        }
  return Tensor::from({batch, steps, tokens, feat}, std::move(out));
}

SpikingPatchSplit::SpikingPatchSplit(const std::string& name, const EventEncoderConfig& cfg, Rng& rng)
    : proj(name + ".proj", 2 * cfg.patch * cfg.patch, cfg.dim, rng, LayerKind::kSnnConv),
      mix(name + ".mix", cfg.dim, cfg.dim, rng, LayerKind::kSnnConv),
      patch_(cfg.patch) {
  if (cfg.patch == 0 || cfg.height % cfg.patch != 0 || cfg.width % cfg.patch != 0)
    throw InvalidInput("patch split: frame size must be divisible by the patch size");
  tokens_ = (cfg.height / cfg.patch) * (cfg.width / cfg.patch);
}

Tensor SpikingPatchSplit::forward(const Tensor& frames, const ForwardContext& ctx) {
  return mix.forward(proj.forward(patchify(frames, patch_), ctx), ctx);
}

void SpikingPatchSplit::collect(ParamSet& ps) const {
  proj.collect(ps);
  mix.collect(ps);
}

void SpikingPatchSplit::clamp() {
  proj.clamp();
  mix.clamp();
}

StateSpacePath::StateSpacePath(const std::string& name, std::size_t dim, std::size_t state, Rng& rng)
    : b_in(name + ".b_in", dim, state, rng, false), c_out(name + ".c_out", state, dim, rng, false), name_(name) {
  // decays spread over roughly (0.5, 0.95)
  std::vector<double> logits(state);
  for (std::size_t j = 0; j < state; ++j) {
    const double a = 0.5 + 0.45 * (state > 1 ? double(j) / double(state - 1) : 0.5);
    logits[j] = std::log(a / (1.0 - a));
  }
  decay_logit = Tensor::from({state}, std::move(logits), true);
}

Tensor StateSpacePath::forward(const Tensor& x, const ForwardContext& ctx) const {
  Tensor u = b_in.forward(x, ctx, LayerKind::kSsm);
  if (ctx.profiler) {
    const double s = double(decay_logit.size());
    ctx.profiler->record(name_ + ".scan", LayerKind::kSsm, 2.0 * double(u.size() / std::size_t(s)) * s,
                         density(u) * double(u.size()), double(u.size()), u.dim(0), u.dim(1));
  }
  return c_out.forward(linear_recurrence(u, decay_logit), ctx, LayerKind::kSsm);
}

void StateSpacePath::collect(ParamSet& ps) const {
  b_in.collect(ps);
  c_out.collect(ps);
  ps.add_param(name_ + ".decay_logit", decay_logit);
}

std::vector<double> StateSpacePath::decay() const {
  std::vector<double> a;
  for (double l : decay_logit.values()) a.push_back(1.0 / (1.0 + std::exp(-l)));
  return a;
}

SpikingMambaBlock::SpikingMambaBlock(const std::string& name, std::size_t dim, std::size_t state, Rng& rng)
    : gate(name + ".gate", dim, dim, rng),
      ssm(name + ".ssm", dim, state, rng),
      bn(name + ".bn", dim),
      sn(name + ".sn"),
      mlp(name + ".mlp", dim, dim, rng),
      name_(name) {}

Tensor SpikingMambaBlock::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor g = gate.forward(x, ctx);
  Tensor z = sn.forward(bn.forward(mul(ssm.forward(x, ctx), g), ctx), ctx);
  Tensor out = spike(add(z, mlp.forward(z, ctx)));
  ctx.note_spikes(name_ + ".out", out);
  return out;
}

void SpikingMambaBlock::collect(ParamSet& ps) const {
  gate.collect(ps);
  ssm.collect(ps);
  bn.collect(ps);
  sn.collect(ps);
  mlp.collect(ps);
}

void SpikingMambaBlock::clamp() {
  gate.clamp();
  sn.clamp_tau();
  mlp.clamp();
}

EventEncoder::EventEncoder(const std::string& name, const EventEncoderConfig& cfg, Rng& rng)
    : sps(name + ".sps", cfg, rng), cfg_(cfg) {
  if (cfg.layers < 1) throw InvalidInput("event encoder needs at least one block");
  for (std::size_t l = 0; l < cfg.layers; ++l)
    blocks.emplace_back(name + ".block" + std::to_string(l), cfg.dim, cfg.state, rng);
}

Tensor EventEncoder::forward(const Tensor& frames, const ForwardContext& ctx) {
  if (frames.rank() != 5 || frames.dim(1) != cfg_.window || frames.dim(3) != cfg_.height ||
      frames.dim(4) != cfg_.width)
    throw InvalidInput("event encoder: expected [B, " + std::to_string(cfg_.window) + ", 2, " +
                       std::to_string(cfg_.height) + ", " + std::to_string(cfg_.width) + "], got " +
                       shape_str(frames.shape()));
  Tensor h = sps.forward(frames, ctx);
  for (auto& b : blocks) h = b.forward(h, ctx);
  return h;
}

void EventEncoder::collect(ParamSet& ps) const {
  sps.collect(ps);
  for (const auto& b : blocks) b.collect(ps);
}

void EventEncoder::clamp() {
  sps.clamp();
  for (auto& b : blocks) b.clamp();
}

}  // namespace spikefuse
