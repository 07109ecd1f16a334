#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dbkd/data.hpp"
#include "dbkd/losses.hpp"
#include "dbkd/metrics.hpp"
#include "dbkd/model.hpp"

namespace dbkd {

// How the passive model moves in a stage-2 iteration.
//   DampedGradient: theta -= (1 - phi) * lr * g
//   ParameterEMA:   theta  = phi * theta + (1 - phi) * theta_active
//   Literal:        theta  = phi * theta + (1 - phi) * lr * g   (decays weights)
enum class PassiveRule { DampedGradient, ParameterEMA, Literal };

std::string to_string(PassiveRule rule);
PassiveRule parse_passive_rule(const std::string& name);

struct DistillConfig {
  // Stage 2 (and patient-specific baseline) optimizer settings.
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::size_t epochs_stage1 = 150;
  std::size_t epochs_stage2 = 150;
  // Stage 1 pool pretraining optimizer settings.
  double pool_lr = 5e-4;
  std::size_t pool_batch_size = 32;

  double temperature = 4.0;
  double momentum = 0.995;
  DivergenceKind divergence = DivergenceKind::KL;
  FeatureLossWeights feature_weights;  // empty = uniform over taps
  double dif_weight = 1.0;
  double div_weight = 1.0;
  bool temperature_squared = false;
  PassiveRule passive_rule = PassiveRule::DampedGradient;
  Role initial_role = Role::Pool;
  std::uint64_t seed = 0;

  // Throws ParameterError on out-of-range values.
  void validate() const;
  JointLossOptions loss_options() const;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam over a model's parameter list, reading gradients from Tensor::grad.
class Adam {
 public:
  Adam(double lr, AdamOptions opts = {}) : lr_(lr), opts_(opts) {}

  // Applies one step; returns the L2 norm of the parameter change.
  double step(Model& model);
  long steps() const { return t_; }

 private:
  double lr_;
  AdamOptions opts_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Passive update of `model` from its own gradients (or from `active`'s
// parameters for ParameterEMA). Returns the L2 norm of the change.
double passive_update(Model& model, const Model& active, const DistillConfig& cfg);

struct TrainRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  Role role = Role::Pool;  // active model
  double l_pred = 0.0;     // active model's loss terms
  double l_dif = 0.0;
  double l_div = 0.0;
  double pool_update_norm = 0.0;
  double cus_update_norm = 0.0;

  double total() const { return l_pred + l_dif + l_div; }
};

struct TrainLog {
  std::vector<TrainRecord> records;

  void write_csv(std::ostream& out) const;
  void write_csv(const std::filesystem::path& path) const;
};

struct TrainHooks {
  // Called with the subject id of every sample in each mini-batch.
  std::function<void(std::span<const std::uint32_t>)> on_batch;
  // Called with the mean training loss after each epoch.
  std::function<void(std::size_t epoch, double mean_loss)> on_epoch;
};

// Mini-batch Adam on cross-entropy for `epochs` epochs. Shuffling uses a
// per-epoch seed derived from `seed`; the last partial batch is kept.
void train_supervised(Model& model, std::span<const WindowedSample> data, double lr, std::size_t batch_size,
                      std::size_t epochs, std::uint64_t seed, const TrainHooks& hooks = {});

// Stage 1: pool model trained on the pooled subjects for epochs_stage1 epochs
// with pool_lr / pool_batch_size.
Model pretrain_pool(const ModelConfig& config, std::span<const WindowedSample> data, const DistillConfig& cfg,
                    const TrainHooks& hooks = {});

// Patient-specific baseline: fresh model, lr / batch_size, epochs_stage2 epochs.
Model train_baseline(const ModelConfig& config, std::span<const WindowedSample> data, const DistillConfig& cfg,
                     const TrainHooks& hooks = {});

// Naive fine-tune of a copy of `pool` with lr / batch_size for epochs_stage2 epochs.
Model fine_tune(const Model& pool, std::span<const WindowedSample> data, const DistillConfig& cfg);

struct DistillResult {
  Model cus;
  Model pool;  // pool model after stage 2
  TrainLog log;
};

// Stage 2: alternating bi-directional distillation on one subject's data.
DistillResult distill(const Model& pool, std::span<const WindowedSample> subject_data, const DistillConfig& cfg,
                      const TrainHooks& hooks = {});

// Argmax prediction for each sample, in order.
std::vector<int> predict_samples(Model& model, std::span<const WindowedSample> samples,
                                 std::size_t batch_size = 64);

struct Grid {
  std::vector<double> learning_rates{1e-5, 5e-5, 1e-4, 5e-4, 1e-3, 5e-3, 1e-2};
  std::vector<std::size_t> batch_sizes{4, 8, 16, 32};
};

struct GridCellResult {
  DistillConfig cfg;
  Metrics validation;
};

struct GridSearchResult {
  DistillConfig best;
  std::vector<GridCellResult> cells;
};

struct DataSplits {
  std::vector<WindowedSample> train;
  std::vector<WindowedSample> validation;
  std::vector<WindowedSample> test;
};

// Trains one model per (lr, batch size) cell and scores it on the validation
// split.
using CellTrainer = std::function<Model(const DistillConfig&, std::span<const WindowedSample> train)>;

// Picks the cell with the highest validation accuracy; ties go to lower FPR,
// then lower lr.
GridSearchResult grid_search(const DistillConfig& base, const Grid& grid, const DataSplits& splits,
                             double window_s, const CellTrainer& train);

}  // namespace dbkd
