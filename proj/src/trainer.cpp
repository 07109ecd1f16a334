#include "dbkd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include "dbkd/errors.hpp"
#include "dbkd/random.hpp"

namespace dbkd {

std::string to_string(PassiveRule rule) {
  switch (rule) {
    case PassiveRule::DampedGradient: return "damped";
    case PassiveRule::ParameterEMA: return "ema";
    case PassiveRule::Literal: return "literal";
  }
  throw ParameterError("unknown passive rule");
}

PassiveRule parse_passive_rule(const std::string& name) {
  if (name == "damped") return PassiveRule::DampedGradient;
  if (name == "ema") return PassiveRule::ParameterEMA;
  if (name == "literal") return PassiveRule::Literal;
  throw ParameterError("unknown passive rule '" + name + "' (expected damped, ema or literal)");
}

void DistillConfig::validate() const {
  if (!(lr > 0.0) || !(pool_lr > 0.0)) throw ParameterError("learning rates must be positive");
  if (batch_size == 0 || pool_batch_size == 0) throw ParameterError("batch sizes must be positive");
  if (!(temperature > 0.0)) throw ParameterError("temperature must be positive");
  if (!(momentum >= 0.0 && momentum <= 1.0)) throw ParameterError("momentum must lie in [0, 1]");
  if (dif_weight < 0.0 || div_weight < 0.0) throw ParameterError("loss term weights must be nonnegative");
  for (const auto& [name, w] : feature_weights) {
    if (!(w >= 0.0)) throw ParameterError("feature weight for '" + name + "' must be nonnegative");
  }
}

JointLossOptions DistillConfig::loss_options() const {
  JointLossOptions o;
  o.temperature = temperature;
  o.divergence = divergence;
  o.feature_weights = feature_weights;
  o.dif_weight = dif_weight;
  o.div_weight = div_weight;
  o.temperature_squared = temperature_squared;
  return o;
}

double Adam::step(Model& model) {
  if (m_.empty()) {
    for (const Tensor& p : model.params) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
  double sq = 0.0;
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    Tensor& p = model.params[k];
    if (!p.grad) continue;
    const auto& g = *p.grad;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = opts_.beta1 * m[i] + (1.0 - opts_.beta1) * g[i];
      v[i] = opts_.beta2 * v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double delta = lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + opts_.epsilon);
      p.data[i] -= delta;
      sq += delta * delta;
    }
  }
  return std::sqrt(sq);
}

double passive_update(Model& model, const Model& active, const DistillConfig& cfg) {
  const double phi = cfg.momentum;
  double sq = 0.0;
  for (std::size_t k = 0; k < model.params.size(); ++k) {
    Tensor& p = model.params[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = p.grad ? (*p.grad)[i] : 0.0;
      const double before = p.data[i];
      switch (cfg.passive_rule) {
        case PassiveRule::DampedGradient:
          p.data[i] = before - (1.0 - phi) * cfg.lr * g;
          break;
        case PassiveRule::ParameterEMA:
          if (active.params.size() != model.params.size() || active.params[k].size() != p.size()) {
            throw ContractError("parameter EMA needs two models of identical architecture");
          }
          p.data[i] = phi * before + (1.0 - phi) * active.params[k].data[i];
          break;
        case PassiveRule::Literal:
          p.data[i] = phi * before + (1.0 - phi) * cfg.lr * g;
          break;
        default:
          throw ParameterError("unknown passive rule");
      }
      const double d = p.data[i] - before;
      sq += d * d;
    }
  }
  return std::sqrt(sq);
}

void TrainLog::write_csv(std::ostream& out) const {
  out << "epoch,batch,role,l_pred,l_dif,l_div,pool_update_norm,cus_update_norm\n";
  char line[256];
  for (const TrainRecord& r : records) {
    std::snprintf(line, sizeof line, "%zu,%zu,%s,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.epoch, r.batch,
                  to_string(r.role).c_str(), r.l_pred, r.l_dif, r.l_div, r.pool_update_norm, r.cus_update_norm);
    out << line;
  }
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  write_csv(out);
}

namespace {

void require_trainable(std::span<const WindowedSample> data, std::string_view what) {
  if (data.empty()) throw DataError(std::string(what) + ": no training samples");
  bool pos = false, neg = false;
  for (const auto& s : data) (s.label == Label::Preictal ? pos : neg) = true;
  if (!pos || !neg) throw DataError(std::string(what) + ": training data contains a single class");
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 1000 + epoch));
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return batches;
}

struct Batch {
  Tensor x;
  std::vector<int> labels;
  std::vector<std::uint32_t> subjects;
};

Batch gather(std::span<const WindowedSample> data, const std::vector<std::size_t>& idx) {
  std::vector<const WindowedSample*> picked;
  Batch b;
  for (std::size_t i : idx) {
    picked.push_back(&data[i]);
    b.labels.push_back(data[i].class_id());
    b.subjects.push_back(data[i].subject_id);
  }
  b.x = stack_windows(std::span<const WindowedSample* const>(picked));
  return b;
}

}  // namespace

void train_supervised(Model& model, std::span<const WindowedSample> data, double lr, std::size_t batch_size,
                      std::size_t epochs, std::uint64_t seed, const TrainHooks& hooks) {
  if (epochs == 0) return;
  require_trainable(data, "supervised training");
  if (!(lr > 0.0) || batch_size == 0) throw ParameterError("lr and batch size must be positive");
  Adam opt(lr);
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = epoch_batches(data.size(), batch_size, seed, epoch);
    for (const auto& idx : batches) {
      const Batch b = gather(data, idx);
      if (hooks.on_batch) hooks.on_batch(b.subjects);
      model.zero_grad();
      Tape tape;
      const ForwardResult fr = forward_with_taps(model, tape, b.x);
      Var loss = cross_entropy(softmax_temperature(fr.logits, 1.0), b.labels);
      loss_sum += loss.item();
      tape.backward(loss);
      opt.step(model);
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, loss_sum / static_cast<double>(batches.size()));
  }
}

Model pretrain_pool(const ModelConfig& config, std::span<const WindowedSample> data, const DistillConfig& cfg,
                    const TrainHooks& hooks) {
  cfg.validate();
  Model pool = build_model(config, derive_seed(cfg.seed, 1));
  if (cfg.epochs_stage1 == 0) return pool;
  require_trainable(data, "pool pretraining");
  train_supervised(pool, data, cfg.pool_lr, cfg.pool_batch_size, cfg.epochs_stage1, derive_seed(cfg.seed, 11), hooks);
  return pool;
}

Model train_baseline(const ModelConfig& config, std::span<const WindowedSample> data, const DistillConfig& cfg,
                     const TrainHooks& hooks) {
  cfg.validate();
  // Same initialization stream as the customized model so the paired
  // comparison differs only in the training scheme.
  Model model = build_model(config, derive_seed(cfg.seed, 2));
  if (cfg.epochs_stage2 == 0) return model;
  require_trainable(data, "baseline training");
  train_supervised(model, data, cfg.lr, cfg.batch_size, cfg.epochs_stage2, derive_seed(cfg.seed, 12), hooks);
  return model;
}

Model fine_tune(const Model& pool, std::span<const WindowedSample> data, const DistillConfig& cfg) {
  cfg.validate();
  Model model = pool;
  train_supervised(model, data, cfg.lr, cfg.batch_size, cfg.epochs_stage2, derive_seed(cfg.seed, 12));
  return model;
}

DistillResult distill(const Model& pool, std::span<const WindowedSample> subject_data, const DistillConfig& cfg,
                      const TrainHooks& hooks) {
  cfg.validate();
  DistillResult out{clone_architecture(pool, derive_seed(cfg.seed, 2)), pool, {}};
  if (cfg.epochs_stage2 == 0) return out;
  require_trainable(subject_data, "distillation");

  const JointLossOptions loss_opts = cfg.loss_options();
  if (!loss_opts.feature_weights.empty() && loss_opts.dif_weight != 0.0) {
    const auto names = pool.config.tap_names();
    if (names.size() != loss_opts.feature_weights.size() ||
        !std::all_of(names.begin(), names.end(),
                     [&](const std::string& n) { return loss_opts.feature_weights.count(n) == 1; })) {
      throw ContractError("feature weights do not match the model's taps");
    }
  }
  if (loss_opts.dif_weight != 0.0 && pool.config.tap_names().empty()) {
    throw ContractError("feature-difference term enabled but the model declares no taps");
  }

  Model& p = out.pool;
  Model& c = out.cus;
  Adam pool_opt(cfg.lr);
  Adam cus_opt(cfg.lr);
  Role active = cfg.initial_role;
  const std::uint64_t shuffle_seed = derive_seed(cfg.seed, 12);

  for (std::size_t epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = epoch_batches(subject_data.size(), cfg.batch_size, shuffle_seed, epoch);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch b = gather(subject_data, batches[bi]);
      if (hooks.on_batch) hooks.on_batch(b.subjects);

      p.zero_grad();
      c.zero_grad();
      Tape pool_tape;
      Tape cus_tape;
      const ForwardResult fp = forward_with_taps(p, pool_tape, b.x);
      const ForwardResult fc = forward_with_taps(c, cus_tape, b.x);
      const JointLoss lp = joint_loss(Role::Pool, fp, fc, b.labels, loss_opts);
      const JointLoss lc = joint_loss(Role::Cus, fc, fp, b.labels, loss_opts);
      pool_tape.backward(lp.total);
      cus_tape.backward(lc.total);

      TrainRecord rec;
      rec.epoch = epoch;
      rec.batch = bi;
      rec.role = active;
      if (active == Role::Pool) {
        rec.pool_update_norm = pool_opt.step(p);
        rec.cus_update_norm = passive_update(c, p, cfg);
        rec.l_pred = lp.pred;
        rec.l_dif = lp.dif;
        rec.l_div = lp.div;
      } else {
        rec.cus_update_norm = cus_opt.step(c);
        rec.pool_update_norm = passive_update(p, c, cfg);
        rec.l_pred = lc.pred;
        rec.l_dif = lc.dif;
        rec.l_div = lc.div;
      }
      loss_sum += (active == Role::Pool ? lp : lc).total.item();
      out.log.records.push_back(rec);
      active = active == Role::Pool ? Role::Cus : Role::Pool;
    }
    if (hooks.on_epoch) hooks.on_epoch(epoch, loss_sum / static_cast<double>(batches.size()));
  }
  return out;
}

std::vector<int> predict_samples(Model& model, std::span<const WindowedSample> samples, std::size_t batch_size) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += batch_size) {
    const auto chunk = samples.subspan(start, std::min(batch_size, samples.size() - start));
    const auto preds = predict(model, stack_windows(chunk));
    out.insert(out.end(), preds.begin(), preds.end());
  }
  return out;
}

GridSearchResult grid_search(const DistillConfig& base, const Grid& grid, const DataSplits& splits,
                             double window_s, const CellTrainer& train) {
  if (grid.learning_rates.empty() || grid.batch_sizes.empty()) throw ParameterError("grid search: empty grid");
  if (splits.validation.empty()) throw DataError("grid search: empty validation split");
  using Key = std::tuple<std::uint32_t, double, int>;
  std::set<Key> held_out;
  for (const auto* part : {&splits.validation, &splits.test})
    for (const auto& s : *part) held_out.emplace(s.subject_id, s.start_s, s.class_id());
  std::set<Key> validation_keys;
  for (const auto& s : splits.validation) validation_keys.emplace(s.subject_id, s.start_s, s.class_id());
  for (const auto& s : splits.test) {
    if (validation_keys.count({s.subject_id, s.start_s, s.class_id()}))
      throw ContractError("grid search: validation and test splits overlap");
  }
  for (const auto& s : splits.train) {
    if (held_out.count({s.subject_id, s.start_s, s.class_id()}))
      throw ContractError("grid search: training split overlaps validation/test");
  }

  GridSearchResult result;
  std::size_t best = 0;
  for (double lr : grid.learning_rates) {
    for (std::size_t bs : grid.batch_sizes) {
      DistillConfig cfg = base;
      cfg.lr = lr;
      cfg.batch_size = bs;
      Model model = train(cfg, splits.train);
      const auto preds = predict_samples(model, splits.validation);
      result.cells.push_back({cfg, compute_metrics(preds, splits.validation, window_s)});
      const auto& cand = result.cells.back();
      const auto& cur = result.cells[best];
      const auto rank = [](const GridCellResult& r) {
        return std::make_tuple(-r.validation.accuracy, r.validation.fpr_per_hour, r.cfg.lr, r.cfg.batch_size);
      };
      if (rank(cand) < rank(cur)) best = result.cells.size() - 1;
    }
  }
  result.best = result.cells[best].cfg;
  return result;
}

}  // namespace dbkd
