#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "spikefuse/model.hpp"

namespace spikefuse {

struct TrainConfig {
  double lr = 0.05;
  double momentum = 0.9;
  bool nesterov = true;
  double weight_decay = 5e-4;
  std::vector<std::size_t> milestones{40, 50};
  double lr_decay = 0.1;
  std::size_t epochs = 60;
  std::size_t batch_size = 32;
  // Evaluate the validation set every this many epochs (and after the last); 0 = only after the last.
  std::size_t eval_every = 0;
};

/// Learning rate for a 0-based epoch: lr * lr_decay^(number of milestones <= epoch).
double scheduled_lr(const TrainConfig& cfg, std::size_t epoch);

/// Momentum SGD. Weight decay applies to matrices only (rank >= 2); biases, BN
/// affine terms, membrane constants and embeddings of rank 1 are not decayed.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double momentum, bool nesterov, double weight_decay);
  void step(double lr);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  bool nesterov_;
  double weight_decay_;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double lr = 0.0;
  double ce = 0.0;
  double kl1 = 0.0, kl2 = 0.0;
  double cos1 = 0.0, cos2 = 0.0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = -1.0;  // -1 when not evaluated this epoch
  double fr_fused = 0.0;
  double fr_b1 = 0.0, fr_b2 = 0.0;
};

/// key=value record on one line.
std::string format_metrics(const EpochMetrics& m);

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalResult {
  double accuracy = 0.0;
  double ce = 0.0;
  double fr_fused = 0.0;
  double fr_b1 = 0.0, fr_b2 = 0.0;
  std::vector<int> predictions;
};

/// Deterministic pass with sampling bypassed, running statistics and priors frozen.
EvalResult evaluate(SpikeFuseNet& model, const Dataset& data, std::size_t batch_size = 32);

/// Runs the full objective per mini-batch. Throws DivergenceError on a non-finite loss.
std::vector<EpochMetrics> train(SpikeFuseNet& model, const Dataset& train_set, const Dataset* val_set,
                                const TrainConfig& cfg, std::uint64_t seed, std::ostream* log = nullptr);

struct AblationRow {
  std::string name;
  ModuleToggles toggles;
  std::size_t params = 0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double sops = 0.0;
  double energy_mj = 0.0;
};

AblationRow run_ablation_row(const std::string& name, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                             const Dataset& train_set, const Dataset& test_set, std::uint64_t seed,
                             std::ostream* log = nullptr);

std::vector<AblationRow> ablate(const std::vector<std::pair<std::string, ModuleToggles>>& grid,
                                const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Dataset& train_set,
                                const Dataset& test_set, std::uint64_t seed, std::ostream* log = nullptr);

void write_ablation_table(std::ostream& os, const std::vector<AblationRow>& rows);

}  // namespace spikefuse
