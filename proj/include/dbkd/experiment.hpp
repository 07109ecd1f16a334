#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dbkd/data.hpp"
#include "dbkd/metrics.hpp"
#include "dbkd/model.hpp"
#include "dbkd/trainer.hpp"

namespace dbkd {

struct ProtocolOptions {
  double train_fraction = 0.6;
  double validation_fraction = 0.2;
  double window_s = 20.0;
  // Worker threads for independent folds.
  std::size_t jobs = 1;
};

struct SubjectData {
  std::uint32_t id = 0;
  DataSplits splits;
};

// Contiguous-in-time split applied per class so every part holds both
// classes: the earliest train_fraction of each class trains, the next
// validation_fraction validates, the remainder tests.
DataSplits split_by_time(std::vector<WindowedSample> windows, double train_fraction, double validation_fraction);

struct SubjectResult {
  std::uint32_t subject = 0;
  Metrics baseline;   // patient-specific naive training
  Metrics distilled;  // customized model from stage 2
};

struct Summary {
  double accuracy = 0.0;
  std::optional<double> sensitivity;  // mean over subjects that have one
  double fpr_per_hour = 0.0;
};

Summary summarize(const std::vector<Metrics>& per_subject);

struct ExperimentResult {
  std::vector<SubjectResult> subjects;  // sorted by subject id

  Summary baseline_summary() const;
  Summary distilled_summary() const;
};

// Leave-one-out protocol with stage-1 pools and patient-specific baselines
// cached per fold, so several distillation settings can share them.
class LeaveOneOut {
 public:
  LeaveOneOut(std::vector<SubjectData> cohort, ModelConfig config, ProtocolOptions opts);

  std::size_t folds() const { return cohort_.size(); }
  const std::vector<SubjectData>& cohort() const { return cohort_; }
  const ModelConfig& config() const { return config_; }
  const ProtocolOptions& options() const { return opts_; }

  // Fold seed derivation is keyed by subject id, not position.
  static DistillConfig fold_config(const DistillConfig& cfg, std::uint32_t subject);

  // Pool for the fold holding out `subject`: trained on every other
  // subject's training split.
  const Model& pool(std::uint32_t subject, const DistillConfig& cfg);
  const Model& baseline(std::uint32_t subject, const DistillConfig& cfg);
  // Subject ids seen in any stage-1 batch of that fold's pool.
  std::set<std::uint32_t> pool_batch_subjects(std::uint32_t subject) const;

  ExperimentResult run(const DistillConfig& cfg);

 private:
  struct PoolKey {
    double lr;
    std::size_t bs;
    std::size_t epochs;
    std::uint64_t seed;
    auto operator<=>(const PoolKey&) const = default;
  };
  const SubjectData& subject(std::uint32_t id) const;
  PoolKey pool_key(const DistillConfig& cfg, std::uint32_t subject) const;
  PoolKey baseline_key(const DistillConfig& cfg, std::uint32_t subject) const;
  SubjectResult run_fold(std::uint32_t subject, const DistillConfig& cfg);

  std::vector<SubjectData> cohort_;
  ModelConfig config_;
  ProtocolOptions opts_;
  mutable std::mutex mu_;
  std::map<std::pair<std::uint32_t, PoolKey>, Model> pools_;
  std::map<std::pair<std::uint32_t, PoolKey>, Model> baselines_;
  std::map<std::uint32_t, std::set<std::uint32_t>> pool_subjects_;
};

ExperimentResult leave_one_out(std::vector<SubjectData> cohort, const ModelConfig& config, const DistillConfig& cfg,
                               const ProtocolOptions& opts = {});

enum class AblationAxis { LossComponents, Divergence, Temperature };

std::string to_string(AblationAxis axis);
AblationAxis parse_axis(const std::string& name);

struct AblationRow {
  std::string setting;
  Summary summary;
  ExperimentResult result;
};

struct AblationTable {
  AblationAxis axis = AblationAxis::Temperature;
  Summary naive;                  // patient-specific baseline
  std::vector<AblationRow> rows;  // excludes the naive row
};

// loss: L_div only, L_dif only, both; divergence: mse, kl, logistic;
// temperature: T = 1, 4, 8. Every cell is a full leave-one-out run.
AblationTable ablate(LeaveOneOut& loo, const DistillConfig& cfg, AblationAxis axis);

}  // namespace dbkd
