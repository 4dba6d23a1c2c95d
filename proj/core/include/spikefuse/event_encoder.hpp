#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "spikefuse/neurons.hpp"

namespace spikefuse {

struct Event {
  double t = 0.0;  // seconds
  std::uint16_t x = 0;
  std::uint16_t y = 0;
  int polarity = 1;  // +1 or -1
};

struct EventStream {
  std::uint16_t width = 0;
  std::uint16_t height = 0;
  std::vector<Event> events;
};

/// Binary layout, little-endian: 8-byte magic "SFEVT001", uint16 width, uint16 height,
/// uint32 count, then per event uint32 t_us, uint16 x, uint16 y, uint8 polarity (1 = on).
void write_events(std::ostream& os, const EventStream& stream);
EventStream read_events(std::istream& is);
void write_events_file(const std::string& path, const EventStream& stream);
EventStream read_events_file(const std::string& path);

struct BinnedEvents {
  Tensor frames;  // [T, 2, H, W]; channel 0 positive, channel 1 negative
  std::size_t skipped = 0;
};

/// Saturating binary bins over [t0, t0 + duration). Events outside the span or the
/// frame are skipped and counted.
BinnedEvents bin_events(const EventStream& stream, std::size_t steps, std::size_t height, std::size_t width,
                        double duration, double t0 = 0.0);

/// [B, T, 2, H, W] frames to [B, T, (H/p)(W/p), 2 p p] patch vectors, row-major patch order.
Tensor patchify(const Tensor& frames, std::size_t patch);

struct EventEncoderConfig {
  std::size_t height = 48;
  std::size_t width = 64;
  std::size_t patch = 8;
  std::size_t window = 16;
  std::size_t dim = 256;
  std::size_t layers = 4;
  std::size_t state = 16;
};

/// Patch projection (kernel = stride = patch) then a second projection, each followed by BN and SN.
class SpikingPatchSplit {
 public:
  SpikingPatchSplit() = default;
  SpikingPatchSplit(const std::string& name, const EventEncoderConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& frames, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();
  std::size_t tokens() const { return tokens_; }

  LpBnSn proj, mix;

 private:
  std::size_t patch_ = 0, tokens_ = 0;
};

/// Diagonal state-space path: h[t] = sigmoid(a) * h[t-1] + B_in x[t], y[t] = C_out h[t].
class StateSpacePath {
 public:
  StateSpacePath() = default;
  StateSpacePath(const std::string& name, std::size_t dim, std::size_t state, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  void collect(ParamSet& ps) const;
  std::vector<double> decay() const;

  Linear b_in, c_out;
  Tensor decay_logit;  // [S]

 private:
  std::string name_;
};

/// Gate g = SN(LP-BN(x)); z = SN(BN(y_ssm * g)); out = SN(z + MLP(z)).
class SpikingMambaBlock {
 public:
  SpikingMambaBlock() = default;
  SpikingMambaBlock(const std::string& name, std::size_t dim, std::size_t state, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  LpBnSn gate;
  StateSpacePath ssm;
  BatchNorm bn;
  LifNeuron sn;
  LpBnSn mlp;

 private:
  std::string name_;
};

class EventEncoder {
 public:
  EventEncoder() = default;
  EventEncoder(const std::string& name, const EventEncoderConfig& cfg, Rng& rng);

  // frames: [B, T, 2, H, W]; returns spikes [B, T, V_p, D].
  Tensor forward(const Tensor& frames, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();
  std::size_t tokens() const { return sps.tokens(); }
  const EventEncoderConfig& config() const { return cfg_; }

  SpikingPatchSplit sps;
  std::vector<SpikingMambaBlock> blocks;

 private:
  EventEncoderConfig cfg_;
};

}  // namespace spikefuse
