#pragma once

#include <filesystem>
#include <string>

#include "dbkd/data.hpp"
#include "dbkd/experiment.hpp"
#include "dbkd/model.hpp"
#include "dbkd/trainer.hpp"

namespace dbkd {

// Structured run configuration shared by every CLI subcommand. JSON keys:
//
//   model     : path to a model config (relative to this file) or an inline object
//   cohort    : synthetic cohort spec (see cohort keys below) or a path to one
//   data_dir  : where `generate` writes and the other commands read datasets
//   training  : lr, batch_size, epochs_stage1, epochs_stage2, pool_lr,
//               pool_batch_size, temperature, momentum, divergence,
//               feature_weights {tap: w}, dif_weight, div_weight,
//               temperature_squared, passive_rule, initial_role, seed
//   protocol  : train_fraction, validation_fraction, jobs
//
// Cohort keys: subjects, fs, channels, noise_sigma, seizures, seizure_s,
// gap_jitter_s, tail_s, duration_s, seed, mechanisms [{name, freq_hz,
// amplitude, burst_s, duty}], mixture [[...]], mixing [[...]],
// mixing_spread, timeline
// {sph_s, pil_s, lead_gap_s, interictal_guard_s, window_s, preictal_overlap}.
struct RunConfig {
  ModelConfig model;
  SyntheticSpec cohort;
  DistillConfig training;
  ProtocolOptions protocol;
  std::filesystem::path data_dir = "data";
};

RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = ".");

SyntheticSpec parse_cohort(const std::string& json_text);
DistillConfig parse_training(const std::string& json_text);

}  // namespace dbkd
