#pragma once

#include <cstddef>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "spikefuse/errors.hpp"

namespace spikefuse {

/// Energy per multiply-accumulate and per accumulate on 45 nm hardware, in picojoules.
inline constexpr double kMacPicojoules = 4.6;
inline constexpr double kAcPicojoules = 0.9;

enum class LayerKind { kSnnConv, kSnnFc, kSsa, kFftIfft, kSsm, kFirstLp };

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

/// One computational layer as seen by the cost model.
///
/// For kFirstLp, `flops` is the dense count over the whole window (charged at the
/// MAC rate). For every other kind, `flops` counts one time step and the layer is
/// charged f_r * T * flops synaptic operations.
struct LayerProfile {
  std::string name;
  LayerKind kind = LayerKind::kSnnFc;
  double flops = 0.0;
  double firing_rate = 0.0;
  std::size_t timesteps = 1;
};

struct EnergyRow {
  std::string name;
  LayerKind kind = LayerKind::kSnnFc;
  double flops = 0.0;
  double firing_rate = 0.0;
  double sops = 0.0;
  double picojoules = 0.0;
};

struct EnergyReport {
  std::vector<EnergyRow> rows;
  double total_flops = 0.0;
  double total_sops = 0.0;
  double mac_picojoules = 0.0;
  double ac_picojoules = 0.0;
  double total_picojoules = 0.0;
  double mac_energy_pj = kMacPicojoules;
  double ac_energy_pj = kAcPicojoules;

  double total_millijoules() const { return total_picojoules * 1e-9; }
};

/// f_r * T * FLOPs.
double sops(double firing_rate, std::size_t timesteps, double flops);

double ann_power(double flops);  // picojoules
double snn_power(double sops);   // picojoules

/// MAC energy of the single first-layer projection plus AC energy of every other layer's SOPs.
EnergyReport model_energy(const std::vector<LayerProfile>& profiles);

/// Operation descriptions understood by the FLOP counter.
struct LayerShape {
  enum class Op { kMatmul, kConv, kDft, kSsm };
  Op op = Op::kMatmul;
  // kMatmul: m x k times k x n
  std::size_t m = 0, k = 0, n = 0;
  // kConv: output positions, channels in/out, kernel volume (product of kernel extents)
  std::size_t positions = 0, c_in = 0, c_out = 0, kernel_volume = 1;
  // kDft: transform length, number of transforms
  std::size_t length = 0, transforms = 1;
  // kSsm: sequence steps, independent lanes, state size
  std::size_t steps = 0, lanes = 0, state = 0;
};

/// matmul 2mkn; conv 2 * positions * c_in * c_out * kernel_volume; naive DFT 8 N^2 per
/// transform; diagonal SSM 2 * steps * lanes * state (one multiply and one add per state).
double count_flops(const LayerShape& shape);

void write_report_text(std::ostream& os, const EnergyReport& report);
void write_report_json(std::ostream& os, const EnergyReport& report);

/// Accumulates per-layer FLOPs and input firing rates while a network runs on a probe batch.
class OpProfiler {
 public:
  // flops: dense count for the whole call; samples and timesteps normalize it.
  void record(const std::string& name, LayerKind kind, double flops, double input_active, double input_total,
              std::size_t samples, std::size_t timesteps);

  std::vector<LayerProfile> profiles() const;
  void clear() { entries_.clear(); order_.clear(); }

 private:
  struct Entry {
    LayerKind kind;
    double flops_per_step = 0.0;
    double active = 0.0;
    double total = 0.0;
    std::size_t timesteps = 1;
  };
  std::map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

}  // namespace spikefuse
