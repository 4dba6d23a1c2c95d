#include "spikefuse/energy.hpp"

#include <iomanip>

#include "json.hpp"

namespace spikefuse {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kSnnConv: return "snn_conv";
    case LayerKind::kSnnFc: return "snn_fc";
    case LayerKind::kSsa: return "ssa";
    case LayerKind::kFftIfft: return "fft_ifft";
    case LayerKind::kSsm: return "ssm";
    case LayerKind::kFirstLp: return "first_lp";
  }
  return "unknown";
}

LayerKind layer_kind_from_string(const std::string& name) {
  for (auto kind : {LayerKind::kSnnConv, LayerKind::kSnnFc, LayerKind::kSsa, LayerKind::kFftIfft, LayerKind::kSsm,
                    LayerKind::kFirstLp})
    if (name == to_string(kind)) return kind;
  throw InvalidInput("unknown layer kind '" + name + "'");
}

double sops(double firing_rate, std::size_t timesteps, double flops) {
  if (!(firing_rate >= 0.0 && firing_rate <= 1.0)) throw InvalidInput("sops: firing rate must lie in [0, 1]");
  if (timesteps < 1) throw InvalidInput("sops: timesteps must be at least 1");
  if (flops < 0.0) throw InvalidInput("sops: negative FLOP count");
  return firing_rate * static_cast<double>(timesteps) * flops;
}

double ann_power(double flops) {
  if (flops < 0.0) throw InvalidInput("ann_power: negative count");
  return kMacPicojoules * flops;
}

double snn_power(double sop_count) {
  if (sop_count < 0.0) throw InvalidInput("snn_power: negative count");
  return kAcPicojoules * sop_count;
}

EnergyReport model_energy(const std::vector<LayerProfile>& profiles) {
  EnergyReport report;
  std::size_t first_layers = 0;
  for (const auto& p : profiles) {
    if (p.flops < 0.0) throw InvalidInput("model_energy: layer '" + p.name + "' has negative FLOPs");
    EnergyRow row{p.name, p.kind, p.flops, p.firing_rate, 0.0, 0.0};
    if (p.kind == LayerKind::kFirstLp) {
      if (++first_layers > 1) throw InvalidInput("model_energy: more than one first_lp layer");
      row.firing_rate = 1.0;
      row.picojoules = ann_power(p.flops);
      report.mac_picojoules += row.picojoules;
    } else {
      row.sops = sops(p.firing_rate, p.timesteps, p.flops);
      row.picojoules = snn_power(row.sops);
      report.ac_picojoules += row.picojoules;
      report.total_sops += row.sops;
    }
    report.total_flops += p.flops;
    report.rows.push_back(std::move(row));
  }
  for (const auto& row : report.rows) report.total_picojoules += row.picojoules;
  return report;
}

double count_flops(const LayerShape& s) {
  using Op = LayerShape::Op;
  switch (s.op) {
    case Op::kMatmul: return 2.0 * double(s.m) * double(s.k) * double(s.n);
    case Op::kConv: return 2.0 * double(s.positions) * double(s.c_in) * double(s.c_out) * double(s.kernel_volume);
    case Op::kDft: return 8.0 * double(s.length) * double(s.length) * double(s.transforms);
    case Op::kSsm: return 2.0 * double(s.steps) * double(s.lanes) * double(s.state);
  }
  throw InvalidInput("count_flops: unknown layer op");
}

void write_report_text(std::ostream& os, const EnergyReport& report) {
  os << std::left << std::setw(36) << "layer" << std::setw(10) << "kind" << std::right << std::setw(14) << "FLOPs"
     << std::setw(10) << "f_r" << std::setw(14) << "SOPs" << std::setw(14) << "pJ" << '\n';
  os << std::setprecision(3);
  for (const auto& r : report.rows)
    os << std::left << std::setw(36) << r.name << std::setw(10) << to_string(r.kind) << std::right << std::setw(14)
       << r.flops << std::setw(10) << r.firing_rate << std::setw(14) << r.sops << std::setw(14) << r.picojoules
       << '\n';
  os << "total_sops " << report.total_sops << "\n";
  os << "mac_pj " << report.mac_picojoules << "\n";
  os << "ac_pj " << report.ac_picojoules << "\n";
  os << "total_pj " << report.total_picojoules << "\n";
  os << "total_mj " << report.total_millijoules() << "\n";
}

void write_report_json(std::ostream& os, const EnergyReport& report) {
  nlohmann::json doc;
  doc["e_mac_pj"] = report.mac_energy_pj;
  doc["e_ac_pj"] = report.ac_energy_pj;
  doc["rows"] = nlohmann::json::array();
  for (const auto& r : report.rows)
    doc["rows"].push_back({{"name", r.name},
                           {"kind", to_string(r.kind)},
                           {"flops", r.flops},
                           {"firing_rate", r.firing_rate},
                           {"sops", r.sops},
                           {"pj", r.picojoules}});
  doc["total_flops"] = report.total_flops;
  doc["total_sops"] = report.total_sops;
  doc["mac_pj"] = report.mac_picojoules;
  doc["ac_pj"] = report.ac_picojoules;
  doc["total_pj"] = report.total_picojoules;
  doc["total_mj"] = report.total_millijoules();
  os << doc.dump(2) << '\n';
}

void OpProfiler::record(const std::string& name, LayerKind kind, double flops, double input_active,
                        double input_total, std::size_t samples, std::size_t timesteps) {
  auto [it, inserted] = entries_.try_emplace(name);
  if (inserted) order_.push_back(name);
  auto& e = it->second;
  e.kind = kind;
  e.timesteps = timesteps;
  const double per_sample = flops / static_cast<double>(samples);
  e.flops_per_step += kind == LayerKind::kFirstLp ? per_sample : per_sample / static_cast<double>(timesteps);
  e.active += input_active;
  e.total += input_total;
}

std::vector<LayerProfile> OpProfiler::profiles() const {
  std::vector<LayerProfile> out;
  for (const auto& name : order_) {
    const auto& e = entries_.at(name);
    LayerProfile p;
    p.name = name;
    p.kind = e.kind;
    p.flops = e.flops_per_step;
    p.firing_rate = e.total > 0.0 ? e.active / e.total : 0.0;
    p.timesteps = e.timesteps;
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace spikefuse
