#include "dbkd/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "dbkd/errors.hpp"
#include "dbkd/random.hpp"

namespace dbkd {

DataSplits split_by_time(std::vector<WindowedSample> windows, double train_fraction, double validation_fraction) {
  if (!(train_fraction > 0.0) || validation_fraction < 0.0 || train_fraction + validation_fraction >= 1.0) {
    throw ConfigError("split fractions must satisfy 0 < train, 0 <= validation, train + validation < 1");
  }
  std::stable_sort(windows.begin(), windows.end(),
                   [](const auto& a, const auto& b) { return a.start_s < b.start_s; });
  DataSplits out;
  for (Label label : {Label::Interictal, Label::Preictal}) {
    std::vector<WindowedSample*> cls;
    for (auto& w : windows)
      if (w.label == label) cls.push_back(&w);
    const auto n = static_cast<double>(cls.size());
    const auto n_train = static_cast<std::size_t>(std::floor(n * train_fraction));
    const auto n_val = static_cast<std::size_t>(std::floor(n * (train_fraction + validation_fraction))) - n_train;
    for (std::size_t i = 0; i < cls.size(); ++i) {
      auto& dst = i < n_train ? out.train : (i < n_train + n_val ? out.validation : out.test);
      dst.push_back(std::move(*cls[i]));
    }
  }
  const auto by_time = [](const auto& a, const auto& b) { return a.start_s < b.start_s; };
  std::stable_sort(out.train.begin(), out.train.end(), by_time);
  std::stable_sort(out.validation.begin(), out.validation.end(), by_time);
  std::stable_sort(out.test.begin(), out.test.end(), by_time);
  return out;
}

Summary summarize(const std::vector<Metrics>& per_subject) {
  Summary s;
  if (per_subject.empty()) return s;
  double sens = 0.0;
  std::size_t sens_n = 0;
  for (const Metrics& m : per_subject) {
    s.accuracy += m.accuracy;
    s.fpr_per_hour += m.fpr_per_hour;
    if (m.sensitivity) {
      sens += *m.sensitivity;
      ++sens_n;
    }
  }
  const auto n = static_cast<double>(per_subject.size());
  s.accuracy /= n;
  s.fpr_per_hour /= n;
  if (sens_n > 0) s.sensitivity = sens / static_cast<double>(sens_n);
  return s;
}

Summary ExperimentResult::baseline_summary() const {
  std::vector<Metrics> m;
  for (const auto& s : subjects) m.push_back(s.baseline);
  return summarize(m);
}

Summary ExperimentResult::distilled_summary() const {
  std::vector<Metrics> m;
  for (const auto& s : subjects) m.push_back(s.distilled);
  return summarize(m);
}

LeaveOneOut::LeaveOneOut(std::vector<SubjectData> cohort, ModelConfig config, ProtocolOptions opts)
    : cohort_(std::move(cohort)), config_(std::move(config)), opts_(opts) {
  if (cohort_.size() < 2) throw DataError("leave-one-out needs at least 2 subjects");
  std::sort(cohort_.begin(), cohort_.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < cohort_.size(); ++i) {
    if (cohort_[i].id == cohort_[i - 1].id) throw DataError("duplicate subject id " + std::to_string(cohort_[i].id));
  }
  for (const auto& s : cohort_) {
    if (s.splits.train.empty() || s.splits.test.empty()) {
      throw DataError("subject " + std::to_string(s.id) + " has an empty train or test split");
    }
  }
  config_.validate();
}

DistillConfig LeaveOneOut::fold_config(const DistillConfig& cfg, std::uint32_t subject) {
  DistillConfig c = cfg;
  c.seed = derive_seed(cfg.seed, 100 + subject);
  return c;
}

const SubjectData& LeaveOneOut::subject(std::uint32_t id) const {
  for (const auto& s : cohort_)
    if (s.id == id) return s;
  throw DataError("unknown subject " + std::to_string(id));
}

LeaveOneOut::PoolKey LeaveOneOut::pool_key(const DistillConfig& cfg, std::uint32_t s) const {
  return {cfg.pool_lr, cfg.pool_batch_size, cfg.epochs_stage1, fold_config(cfg, s).seed};
}

LeaveOneOut::PoolKey LeaveOneOut::baseline_key(const DistillConfig& cfg, std::uint32_t s) const {
  return {cfg.lr, cfg.batch_size, cfg.epochs_stage2, fold_config(cfg, s).seed};
}

const Model& LeaveOneOut::pool(std::uint32_t held_out, const DistillConfig& cfg) {
  const auto key = std::make_pair(held_out, pool_key(cfg, held_out));
  {
    std::lock_guard lock(mu_);
    if (auto it = pools_.find(key); it != pools_.end()) return it->second;
  }
  (void)subject(held_out);
  std::vector<WindowedSample> pooled;
  for (const auto& s : cohort_) {
    if (s.id == held_out) continue;
    pooled.insert(pooled.end(), s.splits.train.begin(), s.splits.train.end());
  }
  std::set<std::uint32_t> seen;
  TrainHooks hooks;
  hooks.on_batch = [&](std::span<const std::uint32_t> ids) {
    for (auto id : ids) {
      if (id == held_out) throw ContractError("leak: held-out subject " + std::to_string(id) + " in a pool batch");
      seen.insert(id);
    }
  };
  Model m = pretrain_pool(config_, pooled, fold_config(cfg, held_out), hooks);
  std::lock_guard lock(mu_);
  pool_subjects_[held_out].insert(seen.begin(), seen.end());
  return pools_.emplace(key, std::move(m)).first->second;
}

const Model& LeaveOneOut::baseline(std::uint32_t s, const DistillConfig& cfg) {
  const auto key = std::make_pair(s, baseline_key(cfg, s));
  {
    std::lock_guard lock(mu_);
    if (auto it = baselines_.find(key); it != baselines_.end()) return it->second;
  }
  Model m = train_baseline(config_, subject(s).splits.train, fold_config(cfg, s));
  std::lock_guard lock(mu_);
  return baselines_.emplace(key, std::move(m)).first->second;
}

std::set<std::uint32_t> LeaveOneOut::pool_batch_subjects(std::uint32_t s) const {
  std::lock_guard lock(mu_);
  auto it = pool_subjects_.find(s);
  return it == pool_subjects_.end() ? std::set<std::uint32_t>{} : it->second;
}

SubjectResult LeaveOneOut::run_fold(std::uint32_t s, const DistillConfig& cfg) {
  const SubjectData& sd = subject(s);
  const DistillConfig fc = fold_config(cfg, s);
  const Model& pool_model = pool(s, cfg);
  Model base = baseline(s, cfg);
  DistillResult dr = distill(pool_model, sd.splits.train, fc);

  SubjectResult r;
  r.subject = s;
  r.baseline = compute_metrics(predict_samples(base, sd.splits.test), sd.splits.test, opts_.window_s);
  r.distilled = compute_metrics(predict_samples(dr.cus, sd.splits.test), sd.splits.test, opts_.window_s);
  return r;
}

ExperimentResult LeaveOneOut::run(const DistillConfig& cfg) {
  cfg.validate();
  ExperimentResult result;
  result.subjects.resize(cohort_.size());
  const std::size_t jobs = std::max<std::size_t>(1, std::min(opts_.jobs, cohort_.size()));
  if (jobs == 1) {
    for (std::size_t i = 0; i < cohort_.size(); ++i) result.subjects[i] = run_fold(cohort_[i].id, cfg);
    return result;
  }
  std::vector<std::exception_ptr> errors(jobs);
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < cohort_.size(); i += jobs) result.subjects[i] = run_fold(cohort_[i].id, cfg);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

ExperimentResult leave_one_out(std::vector<SubjectData> cohort, const ModelConfig& config, const DistillConfig& cfg,
                               const ProtocolOptions& opts) {
  LeaveOneOut loo(std::move(cohort), config, opts);
  return loo.run(cfg);
}

std::string to_string(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::LossComponents: return "loss";
    case AblationAxis::Divergence: return "divergence";
    case AblationAxis::Temperature: return "temperature";
  }
  throw ParameterError("unknown ablation axis");
}

AblationAxis parse_axis(const std::string& name) {
  if (name == "loss") return AblationAxis::LossComponents;
  if (name == "divergence") return AblationAxis::Divergence;
  if (name == "temperature") return AblationAxis::Temperature;
  throw ParameterError("unknown ablation axis '" + name + "' (expected loss, divergence or temperature)");
}

AblationTable ablate(LeaveOneOut& loo, const DistillConfig& cfg, AblationAxis axis) {
  std::vector<std::pair<std::string, DistillConfig>> cells;
  switch (axis) {
    case AblationAxis::LossComponents: {
      DistillConfig div_only = cfg, dif_only = cfg, both = cfg;
      div_only.dif_weight = 0.0;
      dif_only.div_weight = 0.0;
      if (both.dif_weight == 0.0) both.dif_weight = 1.0;
      if (both.div_weight == 0.0) both.div_weight = 1.0;
      if (dif_only.dif_weight == 0.0) dif_only.dif_weight = 1.0;
      if (div_only.div_weight == 0.0) div_only.div_weight = 1.0;
      cells = {{"L_div", div_only}, {"L_dif", dif_only}, {"L_div+L_dif", both}};
      break;
    }
    case AblationAxis::Divergence:
      for (DivergenceKind k : {DivergenceKind::MSE, DivergenceKind::KL, DivergenceKind::Logistic}) {
        DistillConfig c = cfg;
        c.divergence = k;
        cells.emplace_back(to_string(k), c);
      }
      break;
    case AblationAxis::Temperature:
      for (double t : {1.0, 4.0, 8.0}) {
        DistillConfig c = cfg;
        c.temperature = t;
        cells.emplace_back("T=" + std::to_string(static_cast<int>(t)), c);
      }
      break;
  }
  AblationTable table;
  table.axis = axis;
  for (auto& [name, c] : cells) {
    AblationRow row;
    row.setting = name;
    row.result = loo.run(c);
    row.summary = row.result.distilled_summary();
    table.naive = row.result.baseline_summary();
    table.rows.push_back(std::move(row));
  }
  return table;
}

}  // namespace dbkd
