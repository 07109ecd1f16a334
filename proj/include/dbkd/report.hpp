#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dbkd/experiment.hpp"

namespace dbkd {

enum class ReportFormat { Csv, Markdown };

ReportFormat parse_report_format(const std::string& name);

// One CSV line: subject, scheme, accuracy, sensitivity, fpr_per_hour.
struct ReportRow {
  std::string subject;
  std::string scheme;  // "baseline" or "distilled"
  double accuracy = 0.0;
  std::optional<double> sensitivity;
  double fpr_per_hour = 0.0;
};

std::vector<ReportRow> report_rows(const ExperimentResult& result);

// Values are printed with 3 decimals; an absent sensitivity is an empty field.
std::string to_csv(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_csv(const std::string& text);

// Subject rows with baseline and distilled columns side by side, followed by
// an unweighted Average row.
std::string to_markdown(const std::vector<ReportRow>& rows);

std::string ablation_csv(const AblationTable& table);
std::string ablation_markdown(const AblationTable& table);

void emit_report(const ExperimentResult& result, ReportFormat format, const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace dbkd
