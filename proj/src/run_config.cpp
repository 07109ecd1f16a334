#include "dbkd/run_config.hpp"

#include <json.hpp>

#include "dbkd/errors.hpp"
#include "dbkd/report.hpp"

namespace dbkd {

using nlohmann::json;

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

TimelineParams timeline_from(const json& j) {
  TimelineParams p;
  read_opt(j, "sph_s", p.sph_s);
  read_opt(j, "pil_s", p.pil_s);
  read_opt(j, "lead_gap_s", p.lead_gap_s);
  read_opt(j, "interictal_guard_s", p.interictal_guard_s);
  read_opt(j, "window_s", p.window_s);
  read_opt(j, "preictal_overlap", p.preictal_overlap);
  return p;
}

SyntheticSpec cohort_from(const json& j) {
  SyntheticSpec s;
  read_opt(j, "subjects", s.subjects);
  read_opt(j, "fs", s.fs);
  read_opt(j, "channels", s.channels);
  read_opt(j, "noise_sigma", s.noise_sigma);
  read_opt(j, "seizures", s.seizures);
  read_opt(j, "seizure_s", s.seizure_s);
  read_opt(j, "gap_jitter_s", s.gap_jitter_s);
  read_opt(j, "tail_s", s.tail_s);
  read_opt(j, "duration_s", s.duration_s);
  read_opt(j, "seed", s.seed);
  if (j.contains("mechanisms")) {
    for (const json& jm : j.at("mechanisms")) {
      Mechanism m;
      read_opt(jm, "name", m.name);
      read_opt(jm, "freq_hz", m.freq_hz);
      read_opt(jm, "amplitude", m.amplitude);
      read_opt(jm, "burst_s", m.burst_s);
      read_opt(jm, "duty", m.duty);
      s.mechanisms.push_back(m);
    }
  }
  read_opt(j, "mixture", s.mixture);
  read_opt(j, "mixing", s.mixing);
  read_opt(j, "mixing_spread", s.mixing_spread);
  if (j.contains("timeline")) s.timeline = timeline_from(j.at("timeline"));
  s.validate();
  return s;
}

DistillConfig training_from(const json& j) {
  DistillConfig c;
  read_opt(j, "lr", c.lr);
  read_opt(j, "batch_size", c.batch_size);
  read_opt(j, "epochs_stage1", c.epochs_stage1);
  read_opt(j, "epochs_stage2", c.epochs_stage2);
  read_opt(j, "pool_lr", c.pool_lr);
  read_opt(j, "pool_batch_size", c.pool_batch_size);
  read_opt(j, "temperature", c.temperature);
  read_opt(j, "momentum", c.momentum);
  if (j.contains("divergence")) c.divergence = parse_divergence(j.at("divergence").get<std::string>());
  read_opt(j, "feature_weights", c.feature_weights);
  read_opt(j, "dif_weight", c.dif_weight);
  read_opt(j, "div_weight", c.div_weight);
  read_opt(j, "temperature_squared", c.temperature_squared);
  if (j.contains("passive_rule")) c.passive_rule = parse_passive_rule(j.at("passive_rule").get<std::string>());
  if (j.contains("initial_role")) c.initial_role = parse_role(j.at("initial_role").get<std::string>());
  read_opt(j, "seed", c.seed);
  return c;
}

json resolve(const json& node, const std::filesystem::path& base) {
  if (node.is_string()) {
    const std::filesystem::path p = base / node.get<std::string>();
    return json::parse(read_text(p));
  }
  return node;
}

template <typename F>
auto as_config_error(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  } catch (const ParameterError& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  } catch (const DataError& e) {
    throw ConfigError(std::string(what) + ": " + e.what());
  }
}

}  // namespace

SyntheticSpec parse_cohort(const std::string& text) {
  return as_config_error("cohort config", [&] { return cohort_from(json::parse(text)); });
}

DistillConfig parse_training(const std::string& text) {
  return as_config_error("training config", [&] {
    DistillConfig c = training_from(json::parse(text));
    c.validate();
    return c;
  });
}

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  return as_config_error("run config", [&] {
    const json j = json::parse(text);
    RunConfig rc;
    if (!j.contains("model")) throw ConfigError("run config: missing 'model'");
    rc.model = ModelConfig::from_text(resolve(j.at("model"), base_dir).dump());
    if (j.contains("cohort")) rc.cohort = cohort_from(resolve(j.at("cohort"), base_dir));
    if (j.contains("training")) rc.training = training_from(j.at("training"));
    rc.training.validate();
    if (j.contains("protocol")) {
      const json& p = j.at("protocol");
      read_opt(p, "train_fraction", rc.protocol.train_fraction);
      read_opt(p, "validation_fraction", rc.protocol.validation_fraction);
      read_opt(p, "jobs", rc.protocol.jobs);
    }
    rc.protocol.window_s = rc.cohort.timeline.window_s;
    if (j.contains("data_dir")) rc.data_dir = j.at("data_dir").get<std::string>();
    return rc;
  });
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_text(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  return parse_run_config(text, path.parent_path().empty() ? "." : path.parent_path());
}

}  // namespace dbkd
