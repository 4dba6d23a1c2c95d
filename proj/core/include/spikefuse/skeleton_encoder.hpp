#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "spikefuse/neurons.hpp"
#include "spikefuse/spectral.hpp"

namespace spikefuse {

struct SkeletonEncoderConfig {
  std::size_t in_channels = 3;
  std::size_t joints = 25;
  std::size_t window = 16;
  std::size_t dim = 256;
  std::size_t layers = 4;
  std::vector<std::size_t> dilations{1, 2, 3, 4};
  double ssa_scale = 0.125;
};

using Bone = std::pair<std::size_t, std::size_t>;

/// Bone list for a joint count: the 25-joint Kinect layout, the 9-joint synthetic
/// body, or a simple chain for anything else. Each person block repeats the layout.
std::vector<Bone> skeleton_bones(std::size_t joints);

/// (A + I), symmetric-normalized D^-1/2 (A+I) D^-1/2, then rows rescaled to sum to 1.
std::vector<double> normalized_adjacency(std::size_t joints, const std::vector<Bone>& bones);

/// Throws InvalidInput unless every row sums to 1 within 1e-9, entries are
/// non-negative and the diagonal is positive.
void check_row_stochastic(const Tensor& adj);

class SpikingEmbedding {
 public:
  SpikingEmbedding() = default;
  SpikingEmbedding(const std::string& name, const SkeletonEncoderConfig& cfg, Rng& rng);

  // x: [B, T, V, C] token-major coordinates.
  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  LpBnSn block;
  Tensor spe;  // [T, V, D]

 private:
  std::string name_;
};

/// Joint mixing by the normalized adjacency, channel mixing by W_g, then BN and SN.
Tensor spiking_graph_conv(const Tensor& x, const Tensor& adj, const Linear& w_g, BatchNorm& bn, const LifNeuron& sn,
                          const ForwardContext& ctx);

class SpikingGraphConv {
 public:
  SpikingGraphConv() = default;
  SpikingGraphConv(const std::string& name, std::size_t joints, std::size_t dim, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  // A-hat X W_g before BN.
  Tensor pre(const Tensor& x, const ForwardContext& ctx) const;
  Tensor adjacency() const;
  void collect(ParamSet& ps) const;
  // Non-negative entries and a positive diagonal; rows are normalized in forward.
  void project();

  Tensor adj;  // learnable [V, V], row-normalized on use
  Linear w_g;
  BatchNorm bn;
  LifNeuron sn;

 private:
  std::string name_;
};

/// Spike-form Q, K, V; attention = scale * Q (K^T V) per time step without softmax.
class SpikingSelfAttention {
 public:
  SpikingSelfAttention() = default;
  SpikingSelfAttention(const std::string& name, std::size_t dim, double scale, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  LpBnSn q, k, v, out;
  LifNeuron attn_sn;
  double scale = 0.125;

 private:
  std::string name_;
};

/// Time-axis DFT, parallel dilated conv branches on the real and imaginary parts,
/// inverse DFT, BN and SN, with a residual from the graph-conv output.
class SpectralModule {
 public:
  SpectralModule() = default;
  SpectralModule(const std::string& name, std::size_t window, std::size_t dim, const std::vector<std::size_t>& dilations,
                 Rng& rng);

  // Pre-BN reconstruction: idft(branches(dft(x))).
  Tensor transform(const Tensor& x, const ForwardContext& ctx);
  Tensor forward(const Tensor& x, const Tensor& residual, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  // Test hook: branches pass both spectrum parts through untouched.
  bool identity_branches = false;

  std::vector<std::size_t> dilations;
  std::vector<std::vector<Linear>> taps;  // [branch][tap], tap offsets -d, 0, +d
  std::vector<BatchNorm> bn_real, bn_imag;
  BatchNorm bn_out;
  LifNeuron sn_out;

 private:
  std::string name_;
  std::size_t window_ = 0;
  DftMatrices mats_;
};

class SgnLayer {
 public:
  SgnLayer() = default;
  SgnLayer(const std::string& name, const SkeletonEncoderConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  SpikingGraphConv graph;
  SpikingSelfAttention ssa;
  SpectralModule spectral;
};

class SkeletonEncoder {
 public:
  SkeletonEncoder() = default;
  SkeletonEncoder(const std::string& name, const SkeletonEncoderConfig& cfg, Rng& rng);

  // x: [B, T, C, V]; returns spikes [B, T, V, D].
  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  const SkeletonEncoderConfig& config() const { return cfg_; }

  SpikingEmbedding embed;
  std::vector<SgnLayer> layers;

 private:
  SkeletonEncoderConfig cfg_;
};

}  // namespace spikefuse
