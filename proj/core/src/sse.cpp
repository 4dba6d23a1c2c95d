#include "spikefuse/sse.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <ostream>

namespace spikefuse {

namespace {

bool rows_binary(std::span<const double> rows) {
  return std::all_of(rows.begin(), rows.end(), [](double v) { return v == 0.0 || v == 1.0; });
}

}  // namespace

CsrMatrix build_hypergraph(std::span<const double> rows, std::size_t nodes, std::size_t channels, std::size_t k) {
  if (rows.size() != nodes * channels) throw InvalidInput("build_hypergraph: row data does not match shape");
  if (k == 0 || k >= nodes)
    throw InvalidInput("build_hypergraph: k = " + std::to_string(k) + " must lie in [1, " + std::to_string(nodes) +
                       ")");
  // squared distance matrix
  std::vector<double> d2(nodes * nodes, 0.0);
  if (rows_binary(rows)) {
    const std::size_t words = (channels + 63) / 64;
    std::vector<std::uint64_t> bits(nodes * words, 0);
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::size_t c = 0; c < channels; ++c)
        if (rows[i * channels + c] != 0.0) bits[i * words + c / 64] |= std::uint64_t{1} << (c % 64);
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::size_t j = i + 1; j < nodes; ++j) {
        int n = 0;
        for (std::size_t w = 0; w < words; ++w) n += std::popcount(bits[i * words + w] ^ bits[j * words + w]);
        d2[i * nodes + j] = d2[j * nodes + i] = static_cast<double>(n);
      }
  } else {
    for (std::size_t i = 0; i < nodes; ++i)
      for (std::size_t j = i + 1; j < nodes; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          const double diff = rows[i * channels + c] - rows[j * channels + c];
          s += diff * diff;
        }
        d2[i * nodes + j] = d2[j * nodes + i] = s;
      }
  }
  CsrMatrix h;
  h.rows = h.cols = nodes;
  h.row_ptr.reserve(nodes + 1);
  h.row_ptr.push_back(0);
  std::vector<std::size_t> order(nodes - 1);
  for (std::size_t i = 0; i < nodes; ++i) {
    h.col.push_back(i);
    h.val.push_back(1.0);
    std::size_t m = 0;
    for (std::size_t j = 0; j < nodes; ++j)
      if (j != i) order[m++] = j;
    const double* di = d2.data() + i * nodes;
    auto closer = [di](std::size_t a, std::size_t b) { return di[a] < di[b] || (di[a] == di[b] && a < b); };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1), order.end(), closer);
    for (std::size_t n = 0; n + 1 < k; ++n) {
      h.col.push_back(order[n]);
      h.val.push_back(1.0 / (1.0 + std::sqrt(di[order[n]])));
    }
    h.row_ptr.push_back(h.col.size());
  }
  return h;
}

void dump_hypergraph(std::ostream& os, const CsrMatrix& h) {
  for (std::size_t i = 0; i < h.rows; ++i)
    for (std::size_t e = h.row_ptr[i]; e < h.row_ptr[i + 1]; ++e) os << i << ' ' << h.col[e] << ' ' << h.val[e] << '\n';
}

std::vector<CsrMatrix> build_hypergraphs(const Tensor& x, std::size_t k) {
  if (x.rank() != 4) throw InvalidInput("build_hypergraphs: expected [B, T, N, C]");
  const std::size_t batch = x.dim(0), nodes = x.dim(1) * x.dim(2), c = x.dim(3);
  std::vector<CsrMatrix> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) out.push_back(build_hypergraph(x.values().subspan(b * nodes * c, nodes * c), nodes, c, k));
  return out;
}

Tensor hypergraph_propagate(const std::vector<CsrMatrix>& h, const Tensor& x, LpBnSn& block,
                            const ForwardContext& ctx) {
  if (x.rank() != 4) throw InvalidInput("hypergraph_propagate: expected [B, T, N, C]");
  const std::size_t batch = x.dim(0), nodes = x.dim(1) * x.dim(2), c = x.dim(3);
  if (ctx.profiler) {
    double nnz = 0.0;
    for (const auto& m : h) nnz += double(m.nnz());
    ctx.profiler->record(block.lp.name() + ".hg", LayerKind::kSnnFc, 2.0 * nnz * double(c),
                         density(x) * double(x.size()), double(x.size()), batch, x.dim(1));
  }
  Tensor mixed = sparse_mix(reshape(x, {batch, nodes, c}), h);
  return block.forward(reshape(mixed, x.shape()), ctx);
}

GlobalSpikingAttention::GlobalSpikingAttention(const std::string& name, std::size_t channels, std::size_t groups,
                                               Rng& rng)
    : spatial(name + ".spatial", channels, 1, rng),
      spatial_bn(name + ".spatial_bn", 1),
      spatial_sn(name + ".spatial_sn"),
      channel_bn(name + ".channel_bn", channels),
      channel_sn(name + ".channel_sn"),
      name_(name),
      groups_(groups) {
  if (groups == 0 || channels % groups != 0)
    throw InvalidInput("GSA: " + std::to_string(channels) + " channels do not split into " + std::to_string(groups) +
                       " groups");
  const std::size_t w = channels / groups;
  for (std::size_t g = 0; g < groups; ++g) group_proj.emplace_back(name + ".group" + std::to_string(g), w, w, rng);
}

Tensor GlobalSpikingAttention::group_pre(const Tensor& x, const ForwardContext& ctx) const {
  const std::size_t c = x.shape().back();
  if (c != groups_ * group_proj[0].in())
    throw InvalidInput("GSA: channel mismatch " + shape_str(x.shape()));
  const std::size_t w = c / groups_;
  std::vector<Tensor> parts;
  for (std::size_t g = 0; g < groups_; ++g) parts.push_back(group_proj[g].forward(slice_last(x, g * w, (g + 1) * w), ctx));
  return concat_last(parts);
}

Tensor GlobalSpikingAttention::forward(const Tensor& x, const ForwardContext& ctx) {
  Tensor mask = spatial_sn.forward(spatial_bn.forward(spatial.forward(x, ctx), ctx), ctx);
  Tensor x_sp = mul_broadcast_last(x, mask);
  Tensor attn = channel_sn.forward(channel_bn.forward(group_pre(x_sp, ctx), ctx), ctx);
  Tensor x_ch = mul(attn, x_sp);
  Tensor out = spike(add(x_sp, x_ch));
  ctx.note_spikes(name_ + ".out", out);
  return out;
}

void GlobalSpikingAttention::collect(ParamSet& ps) const {
  spatial.collect(ps);
  spatial_bn.collect(ps);
  spatial_sn.collect(ps);
  for (const auto& g : group_proj) g.collect(ps);
  channel_bn.collect(ps);
  channel_sn.collect(ps);
}

void GlobalSpikingAttention::clamp() {
  spatial_sn.clamp_tau();
  channel_sn.clamp_tau();
}

SparseSemanticExtractor::SparseSemanticExtractor(const std::string& name, std::size_t channels, const SseConfig& cfg,
                                                 Rng& rng)
    : prop1(name + ".h1", channels, channels, rng),
      prop2(name + ".h2", channels, channels, rng),
      gsa(name + ".gsa", channels, cfg.groups, rng),
      name_(name),
      cfg_(cfg) {}

Tensor SparseSemanticExtractor::forward(const Tensor& x, const ForwardContext& ctx) {
  last_h1 = hypergraph_propagate(build_hypergraphs(x, cfg_.k), x, prop1, ctx);
  last_gsa = gsa.forward(last_h1, ctx);
  last_h2 = hypergraph_propagate(build_hypergraphs(last_gsa, cfg_.k), last_gsa, prop2, ctx);
  last_raw_sum = add(add(last_h2, last_gsa), x);
  Tensor out = spike(last_raw_sum);
  ctx.note_spikes(name_ + ".out", out);
  return out;
}

void SparseSemanticExtractor::collect(ParamSet& ps) const {
  prop1.collect(ps);
  gsa.collect(ps);
  prop2.collect(ps);
}

void SparseSemanticExtractor::clamp() {
  prop1.clamp();
  prop2.clamp();
  gsa.clamp();
}

}  // namespace spikefuse
