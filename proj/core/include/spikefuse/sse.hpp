#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "spikefuse/neurons.hpp"
#include "spikefuse/ops.hpp"

namespace spikefuse {

/// k-nearest-neighbour hypergraph over the rows of a [nodes, channels] matrix.
/// Each row keeps itself plus its k-1 nearest rows (ties to the lower index) with
/// weight 1 / (1 + Euclidean distance). Binary rows use packed popcount distances.
CsrMatrix build_hypergraph(std::span<const double> rows, std::size_t nodes, std::size_t channels, std::size_t k);

/// Coordinate list "i j weight" per line.
void dump_hypergraph(std::ostream& os, const CsrMatrix& h);

/// H x followed by LP-BN-SN. x: [B, T, N, C]; one matrix per batch entry over the T*N nodes.
Tensor hypergraph_propagate(const std::vector<CsrMatrix>& h, const Tensor& x, LpBnSn& block,
                            const ForwardContext& ctx);

/// Builds one hypergraph per batch entry of x [B, T, N, C].
std::vector<CsrMatrix> build_hypergraphs(const Tensor& x, std::size_t k);

/// Spatial mask then grouped channel attention, combined and re-binarized.
class GlobalSpikingAttention {
 public:
  GlobalSpikingAttention() = default;
  GlobalSpikingAttention(const std::string& name, std::size_t channels, std::size_t groups, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  // Concatenated group outputs before BN, for isolation checks.
  Tensor group_pre(const Tensor& x, const ForwardContext& ctx) const;
  void collect(ParamSet& ps) const;
  void clamp();

  Linear spatial;
  BatchNorm spatial_bn;
  LifNeuron spatial_sn;
  std::vector<Linear> group_proj;
  BatchNorm channel_bn;
  LifNeuron channel_sn;

 private:
  std::string name_;
  std::size_t groups_ = 1;
};

struct SseConfig {
  std::size_t k = 5;
  std::size_t groups = 4;
};

class SparseSemanticExtractor {
 public:
  SparseSemanticExtractor() = default;
  SparseSemanticExtractor(const std::string& name, std::size_t channels, const SseConfig& cfg, Rng& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx);
  void collect(ParamSet& ps) const;
  void clamp();

  // Populated by the last forward: X^(H2) + X^(GSA) + X before the final SN.
  Tensor last_raw_sum;
  Tensor last_h1, last_gsa, last_h2;

  LpBnSn prop1, prop2;
  GlobalSpikingAttention gsa;

 private:
  std::string name_;
  SseConfig cfg_;
};

}  // namespace spikefuse
