#include "spikefuse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include "spikefuse/errors.hpp"
#include "spikefuse/ops.hpp"

namespace spikefuse {

double scheduled_lr(const TrainConfig& cfg, std::size_t epoch) {
  double lr = cfg.lr;
  for (std::size_t m : cfg.milestones)
    if (epoch >= m) lr *= cfg.lr_decay;
  return lr;
}

Sgd::Sgd(std::vector<Tensor> params, double momentum, bool nesterov, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), nesterov_(nesterov), weight_decay_(weight_decay) {
  if (momentum < 0.0 || momentum >= 1.0) throw InvalidInput("sgd: momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw InvalidInput("sgd: weight decay must be non-negative");
  for (const auto& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void Sgd::step(double lr) {
  if (lr < 0.0) throw InvalidInput("sgd: learning rate must be non-negative");
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i];
    if (!p.has_grad()) continue;
    auto g = p.grad();
    auto w = p.mutable_values();
    auto& v = velocity_[i];
    const double wd = p.rank() >= 2 ? weight_decay_ : 0.0;
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double d = g[j] + wd * w[j];
      v[j] = momentum_ * v[j] + d;
      w[j] -= lr * (nesterov_ ? d + momentum_ * v[j] : v[j]);
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

std::string format_metrics(const EpochMetrics& m) {
  std::ostringstream os;
  os << std::setprecision(10) << "epoch=" << m.epoch << " lr=" << m.lr << " ce=" << m.ce << " kl1=" << m.kl1
     << " kl2=" << m.kl2 << " cos1=" << m.cos1 << " cos2=" << m.cos2 << " loss=" << m.loss
     << " train_acc=" << m.train_acc << " val_acc=" << m.val_acc << " fr_fused=" << m.fr_fused
     << " fr_b1=" << m.fr_b1 << " fr_b2=" << m.fr_b2;
  return os.str();
}

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  auto v = logits.values();
  std::vector<int> out(b);
  for (std::size_t i = 0; i < b; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (v[i * k + j] > v[i * k + best]) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

void check_dataset(const SpikeFuseNet& model, const Dataset& data) {
  if (data.samples.empty()) throw InvalidInput("dataset is empty");
  for (const auto& s : data.samples)
    if (s.label < 0 || static_cast<std::size_t>(s.label) >= model.config().classes)
      throw InvalidInput("dataset label " + std::to_string(s.label) + " outside the model's " +
                         std::to_string(model.config().classes) + " classes");
}

}  // namespace

EvalResult evaluate(SpikeFuseNet& model, const Dataset& data, std::size_t batch_size) {
  check_dataset(model, data);
  if (batch_size == 0) throw InvalidInput("evaluate: batch size must be positive");
  NoGradGuard no_grad;
  ForwardContext ctx;
  EvalResult r;
  std::size_t correct = 0;
  double ce_sum = 0.0, fused = 0.0, b1 = 0.0, b2 = 0.0;
  const std::size_t n = data.samples.size();
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, n - start));
    std::iota(idx.begin(), idx.end(), start);
    Batch batch = make_batch(data, idx);
    ModelOutput out = model.forward(batch, ctx);
    const double w = static_cast<double>(idx.size());
    ce_sum += out.ce.item() * w;
    fused += density(out.fused) * w;
    if (out.dib) {
      b1 += density(out.dib->stage1.b) * w;
      b2 += density(out.dib->stage2.b) * w;
    }
    for (std::size_t i = 0; auto p : argmax_rows(out.logits)) {
      r.predictions.push_back(p);
      if (p == batch.labels[i++]) ++correct;
    }
  }
  const double total = static_cast<double>(n);
  r.accuracy = static_cast<double>(correct) / total;
  r.ce = ce_sum / total;
  r.fr_fused = fused / total;
  r.fr_b1 = b1 / total;
  r.fr_b2 = b2 / total;
  return r;
}

std::vector<EpochMetrics> train(SpikeFuseNet& model, const Dataset& train_set, const Dataset* val_set,
                                const TrainConfig& cfg, std::uint64_t seed, std::ostream* log) {
  check_dataset(model, train_set);
  if (val_set) check_dataset(model, *val_set);
  if (cfg.batch_size == 0) throw InvalidInput("train: batch size must be positive");
  if (cfg.epochs == 0) throw InvalidInput("train: epochs must be positive");

  Sgd opt(model.parameters().params(), cfg.momentum, cfg.nesterov, cfg.weight_decay);
  Rng rng(mix_seed(seed, 0x7a11));
  std::vector<std::size_t> order(train_set.samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochMetrics> history;
  EpochMetrics last_finite;
  bool have_finite = false;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochMetrics m;
    m.epoch = epoch;
    m.lr = scheduled_lr(cfg, epoch);
    std::size_t seen = 0, correct = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      Batch batch = make_batch(train_set, idx);
      ForwardContext ctx;
      ctx.training = true;
      ctx.update_stats = true;
      ctx.sampling = SamplingMode::kDraw;
      ctx.rng = &rng;
      auto diverged = [&](const std::string& why) {
        std::string msg = "training diverged at epoch " + std::to_string(epoch) + ": " + why;
        if (have_finite) msg += "; last finite metrics: " + format_metrics(last_finite);
        return DivergenceError(msg);
      };
      ModelOutput out;
      try {
        out = model.forward(batch, ctx);
      } catch (const NumericError& e) {
        throw diverged(e.what());
      }
      const double loss = out.loss.item();
      if (!std::isfinite(loss)) throw diverged("non-finite loss");
      opt.zero_grad();
      backward(out.loss);
      opt.step(m.lr);
      model.clamp();

      const double w = static_cast<double>(idx.size());
      m.loss += loss * w;
      m.ce += out.ce.item() * w;
      m.fr_fused += density(out.fused) * w;
      if (out.dib) {
        m.kl1 += out.dib->stage1.kl.item() * w;
        m.kl2 += out.dib->stage2.kl.item() * w;
        m.cos1 += out.dib->cos1.item() * w;
        m.cos2 += out.dib->cos2.item() * w;
        m.fr_b1 += density(out.dib->stage1.b) * w;
        m.fr_b2 += density(out.dib->stage2.b) * w;
      }
      for (std::size_t i = 0; auto p : argmax_rows(out.logits))
        if (p == batch.labels[i++]) ++correct;
      seen += idx.size();
    }
    const double n = static_cast<double>(seen);
    for (double* f : {&m.loss, &m.ce, &m.fr_fused, &m.kl1, &m.kl2, &m.cos1, &m.cos2, &m.fr_b1, &m.fr_b2}) *f /= n;
    m.train_acc = static_cast<double>(correct) / n;
    const bool last = epoch + 1 == cfg.epochs;
    if (val_set && (last || (cfg.eval_every && (epoch + 1) % cfg.eval_every == 0)))
      m.val_acc = evaluate(model, *val_set, cfg.batch_size).accuracy;
    last_finite = m;
    have_finite = true;
    history.push_back(m);
    if (log) *log << format_metrics(m) << '\n' << std::flush;
  }
  opt.zero_grad();
  return history;
}

AblationRow run_ablation_row(const std::string& name, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                             const Dataset& train_set, const Dataset& test_set, std::uint64_t seed,
                             std::ostream* log) {
  Rng init(mix_seed(seed, 0x1417));
  SpikeFuseNet model(model_cfg, init);
  AblationRow row;
  row.name = name;
  row.toggles = model_cfg.toggles;
  row.params = model.param_count();
  train(model, train_set, nullptr, train_cfg, seed, log);
  row.train_acc = evaluate(model, train_set, train_cfg.batch_size).accuracy;
  row.test_acc = evaluate(model, test_set, train_cfg.batch_size).accuracy;
  std::vector<std::size_t> probe(std::min<std::size_t>(test_set.samples.size(), train_cfg.batch_size));
  std::iota(probe.begin(), probe.end(), 0);
  EnergyReport report = model_energy(model.profile(make_batch(test_set, probe)));
  row.sops = report.total_sops;
  row.energy_mj = report.total_millijoules();
  return row;
}

std::vector<AblationRow> ablate(const std::vector<std::pair<std::string, ModuleToggles>>& grid,
                                const ModelConfig& model_cfg, const TrainConfig& train_cfg, const Dataset& train_set,
                                const Dataset& test_set, std::uint64_t seed, std::ostream* log) {
  if (grid.empty()) throw InvalidInput("ablate: empty grid");
  std::vector<AblationRow> rows;
  for (const auto& [name, toggles] : grid) {
    ModelConfig cfg = model_cfg;
    cfg.toggles = toggles;
    if (log) *log << "# row " << name << '\n';
    rows.push_back(run_ablation_row(name, cfg, train_cfg, train_set, test_set, seed, log));
  }
  return rows;
}

void write_ablation_table(std::ostream& os, const std::vector<AblationRow>& rows) {
  os << "row\tsgn\tmamba\tsse\tscm\tdib\tparams\ttrain_acc\ttest_acc\tsops\tenergy_mj\n";
  os << std::setprecision(10);
  for (const auto& r : rows) {
    const auto& t = r.toggles;
    os << r.name << '\t' << t.sgn << '\t' << t.mamba << '\t' << t.sse << '\t' << t.scm << '\t' << t.dib << '\t'
       << r.params << '\t' << r.train_acc << '\t' << r.test_acc << '\t' << r.sops << '\t' << r.energy_mj << '\n';
  }
}

}  // namespace spikefuse
