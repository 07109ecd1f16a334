// Command-line driver: generate / pretrain / distill / evaluate / loo / ablate / report.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure, 1 other.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <regex>

#include "dbkd/data.hpp"
#include "dbkd/errors.hpp"
#include "dbkd/experiment.hpp"
#include "dbkd/model.hpp"
#include "dbkd/report.hpp"
#include "dbkd/run_config.hpp"
#include "dbkd/trainer.hpp"

namespace fs = std::filesystem;
using namespace dbkd;

namespace {

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature;
  std::optional<double> momentum;
  std::optional<std::string> divergence;
  std::optional<std::string> passive_rule;
  std::optional<std::size_t> jobs;
};

struct Common {
  std::string config;
  std::string out = "out";
  std::string data;
  Overrides ov;
};

RunConfig load(const Common& c) {
  RunConfig rc = load_run_config(c.config);
  try {
    if (c.ov.seed) rc.training.seed = *c.ov.seed;
    if (c.ov.temperature) rc.training.temperature = *c.ov.temperature;
    if (c.ov.momentum) rc.training.momentum = *c.ov.momentum;
    if (c.ov.divergence) rc.training.divergence = parse_divergence(*c.ov.divergence);
    if (c.ov.passive_rule) rc.training.passive_rule = parse_passive_rule(*c.ov.passive_rule);
    if (c.ov.jobs) rc.protocol.jobs = *c.ov.jobs;
    rc.training.validate();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (!c.data.empty()) rc.data_dir = c.data;
  return rc;
}

fs::path subject_file(const fs::path& dir, std::uint32_t id) {
  char name[64];
  std::snprintf(name, sizeof name, "subject_%03u.dbds", id);
  return dir / name;
}

// Windows per subject, read from the data directory, or generated from the
// cohort spec when the directory holds no datasets.
std::map<std::uint32_t, std::vector<WindowedSample>> subject_windows(const RunConfig& rc) {
  std::map<std::uint32_t, std::vector<WindowedSample>> out;
  const std::regex pattern(R"(subject_(\d+)\.dbds)");
  if (fs::is_directory(rc.data_dir)) {
    for (const auto& entry : fs::directory_iterator(rc.data_dir)) {
      std::smatch m;
      const std::string name = entry.path().filename().string();
      if (std::regex_match(name, m, pattern)) {
        out[static_cast<std::uint32_t>(std::stoul(m[1]))] = read_dataset(entry.path());
      }
    }
  }
  if (out.empty()) {
    for (const Recording& rec : generate_cohort(rc.cohort)) out[rec.subject_id] = windows_for(rec, rc.cohort.timeline);
  }
  return out;
}

std::vector<SubjectData> cohort_splits(const RunConfig& rc) {
  std::vector<SubjectData> cohort;
  for (auto& [id, windows] : subject_windows(rc)) {
    SubjectData sd;
    sd.id = id;
    sd.splits = split_by_time(std::move(windows), rc.protocol.train_fraction, rc.protocol.validation_fraction);
    if (sd.splits.train.empty() || sd.splits.test.empty()) {
      throw DataError("subject " + std::to_string(id) + " has an empty train or test split");
    }
    cohort.push_back(std::move(sd));
  }
  return cohort;
}

const SubjectData& find_subject(const std::vector<SubjectData>& cohort, std::uint32_t id) {
  for (const auto& s : cohort)
    if (s.id == id) return s;
  throw DataError("subject " + std::to_string(id) + " not found");
}

void add_common(CLI::App* cmd, Common& c, bool training_flags) {
  cmd->add_option("--config", c.config, "run configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--data", c.data, "dataset directory (overrides data_dir)");
  cmd->add_option("--seed", c.ov.seed, "seed override");
  if (!training_flags) return;
  cmd->add_option("--temperature", c.ov.temperature, "distillation temperature T");
  cmd->add_option("--momentum", c.ov.momentum, "passive-update momentum");
  cmd->add_option("--divergence", c.ov.divergence, "mse, kl or logistic")
      ->check(CLI::IsMember({"mse", "kl", "logistic"}));
  cmd->add_option("--passive-rule", c.ov.passive_rule, "damped, ema or literal")
      ->check(CLI::IsMember({"damped", "ema", "literal"}));
  cmd->add_option("--jobs", c.ov.jobs, "parallel folds");
}

void print_metrics(const std::string& label, const Metrics& m) {
  std::printf("%-10s acc=%.3f sens=%s fpr/h=%.3f (tp=%zu fp=%zu tn=%zu fn=%zu)\n", label.c_str(), m.accuracy,
              m.sensitivity ? std::to_string(*m.sensitivity).substr(0, 5).c_str() : "n/a", m.fpr_per_hour, m.tp,
              m.fp, m.tn, m.fn);
}

int run(int argc, char** argv) {
  CLI::App app{"Dual-stage bi-directional knowledge distillation for seizure prediction"};
  app.require_subcommand(1);

  Common gen, pre, dis, eva, loo, abl;
  std::uint32_t holdout = 0, dis_subject = 0, eva_subject = 0;
  std::string pool_path, model_path, split = "test", axis, report_in, report_format = "markdown", report_out;

  auto* c_gen = app.add_subcommand("generate", "synthesize the cohort and write per-subject datasets");
  add_common(c_gen, gen, false);

  auto* c_pre = app.add_subcommand("pretrain", "stage 1: train a pool model on every subject but one");
  add_common(c_pre, pre, true);
  c_pre->add_option("--holdout", holdout, "subject excluded from the pool")->required();

  auto* c_dis = app.add_subcommand("distill", "stage 2: bi-directional distillation on one subject");
  add_common(c_dis, dis, true);
  c_dis->add_option("--pool", pool_path, "pool checkpoint")->required()->check(CLI::ExistingFile);
  c_dis->add_option("--subject", dis_subject, "target subject")->required();

  auto* c_eva = app.add_subcommand("evaluate", "score a checkpoint on one subject's split");
  add_common(c_eva, eva, false);
  c_eva->add_option("--model", model_path, "checkpoint")->required()->check(CLI::ExistingFile);
  c_eva->add_option("--subject", eva_subject, "subject")->required();
  c_eva->add_option("--split", split, "train, validation or test")
      ->check(CLI::IsMember({"train", "validation", "test"}));

  auto* c_loo = app.add_subcommand("loo", "leave-one-out comparison against patient-specific training");
  add_common(c_loo, loo, true);

  auto* c_abl = app.add_subcommand("ablate", "ablation over loss components, divergence or temperature");
  add_common(c_abl, abl, true);
  c_abl->add_option("--axis", axis, "loss, divergence or temperature")
      ->required()
      ->check(CLI::IsMember({"loss", "divergence", "temperature"}));

  auto* c_rep = app.add_subcommand("report", "render a results CSV as CSV or markdown");
  c_rep->add_option("--input", report_in, "results CSV")->required()->check(CLI::ExistingFile);
  c_rep->add_option("--format", report_format, "csv or markdown")->check(CLI::IsMember({"csv", "markdown"}));
  c_rep->add_option("--out", report_out, "output file (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (c_gen->parsed()) {
    RunConfig rc = load(gen);
    if (gen.ov.seed) rc.cohort.seed = *gen.ov.seed;
    const fs::path dir = gen.data.empty() ? fs::path(gen.out) : fs::path(gen.data);
    fs::create_directories(dir);
    for (const Recording& rec : generate_cohort(rc.cohort)) {
      const auto windows = windows_for(rec, rc.cohort.timeline);
      std::size_t pre_n = 0;
      for (const auto& w : windows) pre_n += w.label == Label::Preictal;
      write_dataset(subject_file(dir, rec.subject_id), windows);
      std::printf("subject %u: %zu windows (%zu preictal, %zu interictal), %zu lead seizures\n", rec.subject_id,
                  windows.size(), pre_n, windows.size() - pre_n, lead_seizures(rec, rc.cohort.timeline).size());
    }
    return 0;
  }

  if (c_pre->parsed()) {
    const RunConfig rc = load(pre);
    const auto cohort = cohort_splits(rc);
    (void)find_subject(cohort, holdout);
    std::vector<WindowedSample> pooled;
    for (const auto& s : cohort)
      if (s.id != holdout) pooled.insert(pooled.end(), s.splits.train.begin(), s.splits.train.end());
    const Model pool = pretrain_pool(rc.model, pooled, LeaveOneOut::fold_config(rc.training, holdout));
    fs::create_directories(pre.out);
    save_checkpoint(pool, fs::path(pre.out) / "pool.ckpt");
    std::printf("pool model (held out subject %u) -> %s\n", holdout, (fs::path(pre.out) / "pool.ckpt").c_str());
    return 0;
  }

  if (c_dis->parsed()) {
    const RunConfig rc = load(dis);
    const auto cohort = cohort_splits(rc);
    const SubjectData& sd = find_subject(cohort, dis_subject);
    const Model pool = load_checkpoint(pool_path);
    if (pool.config != rc.model) throw ConfigError("pool checkpoint architecture differs from the run config");
    DistillResult r = distill(pool, sd.splits.train, LeaveOneOut::fold_config(rc.training, dis_subject));
    const fs::path out(dis.out);
    fs::create_directories(out);
    save_checkpoint(r.cus, out / "cus.ckpt");
    save_checkpoint(r.pool, out / "pool_after.ckpt");
    r.log.write_csv(out / "trainlog.csv");
    print_metrics("cus", compute_metrics(predict_samples(r.cus, sd.splits.test), sd.splits.test, rc.protocol.window_s));
    return 0;
  }

  if (c_eva->parsed()) {
    const RunConfig rc = load(eva);
    const auto cohort = cohort_splits(rc);
    const SubjectData& sd = find_subject(cohort, eva_subject);
    Model model = load_checkpoint(model_path);
    const auto& samples = split == "train" ? sd.splits.train : split == "validation" ? sd.splits.validation : sd.splits.test;
    const Metrics m = compute_metrics(predict_samples(model, samples), samples, rc.protocol.window_s);
    print_metrics(split, m);
    fs::create_directories(eva.out);
    write_text(fs::path(eva.out) / "metrics.csv",
               to_csv({{std::to_string(eva_subject), split, m.accuracy, m.sensitivity, m.fpr_per_hour}}));
    return 0;
  }

  if (c_loo->parsed()) {
    const RunConfig rc = load(loo);
    LeaveOneOut protocol(cohort_splits(rc), rc.model, rc.protocol);
    const ExperimentResult result = protocol.run(rc.training);
    const fs::path out(loo.out);
    fs::create_directories(out);
    emit_report(result, ReportFormat::Csv, out / "results.csv");
    emit_report(result, ReportFormat::Markdown, out / "results.md");
    std::cout << read_text(out / "results.md");
    return 0;
  }

  if (c_abl->parsed()) {
    const RunConfig rc = load(abl);
    LeaveOneOut protocol(cohort_splits(rc), rc.model, rc.protocol);
    const AblationTable table = ablate(protocol, rc.training, parse_axis(axis));
    const fs::path out(abl.out);
    fs::create_directories(out);
    write_text(out / ("ablation_" + axis + ".csv"), ablation_csv(table));
    write_text(out / ("ablation_" + axis + ".md"), ablation_markdown(table));
    std::cout << ablation_markdown(table);
    return 0;
  }

  if (c_rep->parsed()) {
    const auto rows = parse_csv(read_text(report_in));
    const std::string text = parse_report_format(report_format) == ReportFormat::Csv ? to_csv(rows) : to_markdown(rows);
    if (report_out.empty()) {
      std::cout << text;
    } else {
      write_text(report_out, text);
    }
    return 0;
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const ParameterError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 4;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
