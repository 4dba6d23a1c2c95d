#include "spikefuse_cli/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>

#include "CLI11.hpp"
#include "spikefuse/config.hpp"

namespace spikefuse::cli {

namespace fs = std::filesystem;

namespace {

struct CommonOptions {
  std::string preset = "toy";
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

void add_common(CLI::App* cmd, CommonOptions& o, bool with_out = true) {
  cmd->add_option("--preset", o.preset, "Base settings before the config file")
      ->check(CLI::IsMember({"toy", "full"}));
  cmd->add_option("--config", o.config, "key = value settings file");
  cmd->add_option("--set", o.overrides, "Override one setting (key=value); repeatable");
  cmd->add_option("--seed", o.seed, "Seed for every random choice (falls back to SPIKEFUSE_SEED)");
  if (with_out) cmd->add_option("--out", o.out, "Output directory");
}

RunConfig resolve(const CommonOptions& o) {
  RunConfig cfg = o.preset == "full" ? full_preset() : toy_preset();
  if (!o.config.empty()) load_config_file(o.config, cfg);
  for (const auto& s : o.overrides) apply_override(cfg, s);
  if (o.seed) {
    cfg.seed = *o.seed;
  } else if (const char* env = std::getenv("SPIKEFUSE_SEED")) {
    apply_override(cfg, std::string("run.seed=") + env);
  }
  return cfg;
}

fs::path prepare_out(const std::string& out, const RunConfig& cfg) {
  fs::path dir(out);
  fs::create_directories(dir);
  std::ofstream os(dir / "resolved_config.txt");
  if (!os) throw std::runtime_error("cannot write " + (dir / "resolved_config.txt").string());
  write_config(os, cfg);
  return dir;
}

std::pair<Dataset, Dataset> datasets(const RunConfig& cfg, const std::string& data, const std::string& val) {
  if (data.empty()) return synth_splits(cfg);
  Dataset train = load_dataset(data, cfg);
  Dataset test = val.empty() ? train : load_dataset(val, cfg);
  return {std::move(train), std::move(test)};
}

Batch probe_batch(const Dataset& d, std::size_t max_size) {
  std::vector<std::size_t> idx(std::min(max_size, d.samples.size()));
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(d, idx);
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spiking event-skeleton action recognition toolkit", "spikefuse-cli"};
  app.require_subcommand(1);

  CommonOptions synth_o, train_o, eval_o, ablate_o, energy_o;
  std::optional<std::size_t> synth_classes, synth_per_class;
  std::string train_data, train_val, eval_ckpt, eval_data, ablate_data, ablate_val, energy_ckpt, energy_probe;
  std::string energy_format = "text";
  std::string ablate_grid = "chain";

  auto* synth = app.add_subcommand("synth", "Write a synthetic paired dataset and manifest");
  synth->alias("synth-data");
  add_common(synth, synth_o);
  synth->add_option("--classes", synth_classes, "Number of classes")->check(CLI::Range(2, 1 << 16));
  synth->add_option("--samples-per-class", synth_per_class, "Clips per class")->check(CLI::Range(1, 1 << 20));

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_common(train_cmd, train_o);
  train_cmd->add_option("--data", train_data, "Training manifest or directory (default: synthetic)");
  train_cmd->add_option("--val", train_val, "Validation manifest or directory");

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval_ckpt, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Manifest or directory (default: synthetic test split)");
  eval_cmd->add_option("--out", eval_o.out, "Output directory");

  auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate each row of a module grid");
  add_common(ablate_cmd, ablate_o);
  ablate_cmd->add_option("--data", ablate_data, "Training manifest or directory (default: synthetic)");
  ablate_cmd->add_option("--val", ablate_val, "Test manifest or directory");
  ablate_cmd->add_option("--grid", ablate_grid, "chain (five cumulative rows) or fusion (full, single modality, direct add)")
      ->check(CLI::IsMember({"chain", "fusion"}));

  auto* energy_cmd = app.add_subcommand("energy-report", "Per-layer SOPs and energy on a probe batch");
  energy_cmd->add_option("--checkpoint", energy_ckpt, "Checkpoint file")->required();
  energy_cmd->add_option("--probe", energy_probe, "Manifest or directory for the probe batch")->required();
  energy_cmd->add_option("--format", energy_format, "text or json")->check(CLI::IsMember({"text", "json"}));
  energy_cmd->add_option("--out", energy_o.out, "Output directory");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      RunConfig cfg = resolve(synth_o);
      if (synth_classes) {
        cfg.synth.classes = *synth_classes;
        cfg.model.classes = *synth_classes;
      }
      if (synth_per_class) cfg.train_per_class = *synth_per_class;
      fs::path dir = prepare_out(synth_o.out, cfg);
      const std::string manifest =
          write_synth_files(dir.string(), synth_for(cfg), cfg.v2e, cfg.train_per_class, mix_seed(cfg.seed, 1));
      out << "wrote " << cfg.train_per_class * cfg.synth.classes << " samples to " << manifest << '\n';
    } else if (train_cmd->parsed()) {
      RunConfig cfg = resolve(train_o);
      fs::path dir = prepare_out(train_o.out, cfg);
      auto [train_set, test_set] = datasets(cfg, train_data, train_val);
      Rng init(mix_seed(cfg.seed, 0x1417));
      SpikeFuseNet model(cfg.model, init);
      std::ofstream log(dir / "metrics.log");
      train(model, train_set, &test_set, cfg.train, cfg.seed, &log);
      save_checkpoint((dir / "checkpoint.bin").string(), cfg, model);
      const EvalResult tr = evaluate(model, train_set, cfg.train.batch_size);
      const EvalResult te = evaluate(model, test_set, cfg.train.batch_size);
      out << "params=" << model.param_count() << " train_acc=" << tr.accuracy << " test_acc=" << te.accuracy
          << '\n';
    } else if (eval_cmd->parsed()) {
      LoadedCheckpoint ck = load_checkpoint(eval_ckpt);
      Dataset data = eval_data.empty() ? synth_splits(ck.config).second : load_dataset(eval_data, ck.config);
      const EvalResult r = evaluate(*ck.model, data, ck.config.train.batch_size);
      fs::path dir(eval_o.out);
      fs::create_directories(dir);
      std::ofstream os(dir / "eval.txt");
      os << std::setprecision(10) << "accuracy=" << r.accuracy << " ce=" << r.ce << " fr_fused=" << r.fr_fused
         << " fr_b1=" << r.fr_b1 << " fr_b2=" << r.fr_b2 << " samples=" << data.samples.size() << '\n';
      out << "accuracy=" << r.accuracy << " samples=" << data.samples.size() << '\n';
    } else if (ablate_cmd->parsed()) {
      RunConfig cfg = resolve(ablate_o);
      fs::path dir = prepare_out(ablate_o.out, cfg);
      auto [train_set, test_set] = datasets(cfg, ablate_data, ablate_val);
      auto grid = ablation_chain();
      if (ablate_grid == "fusion")
        grid = {{"full", ModuleToggles{}},
                {"skeleton-only", ModuleToggles{true, false, true, false, true}},
                {"event-only", ModuleToggles{false, true, true, false, true}},
                {"direct-add", ModuleToggles{true, true, true, false, true}}};
      std::ofstream log(dir / "ablation.log");
      auto rows = ablate(grid, cfg.model, cfg.train, train_set, test_set, cfg.seed, &log);
      std::ofstream table(dir / "ablation.tsv");
      write_ablation_table(table, rows);
      write_ablation_table(out, rows);
    } else if (energy_cmd->parsed()) {
      LoadedCheckpoint ck = load_checkpoint(energy_ckpt);
      Dataset probe = load_dataset(energy_probe, ck.config);
      EnergyReport report = model_energy(ck.model->profile(probe_batch(probe, ck.config.train.batch_size)));
      fs::path dir(energy_o.out);
      fs::create_directories(dir);
      const bool json = energy_format == "json";
      std::ofstream os(dir / (json ? "energy.json" : "energy.txt"));
      if (json) {
        write_report_json(os, report);
      } else {
        write_report_text(os, report);
      }
      write_report_text(out, report);
    }
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace spikefuse::cli
