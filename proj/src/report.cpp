#include "dbkd/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "dbkd/errors.hpp"

namespace dbkd {

ReportFormat parse_report_format(const std::string& name) {
  if (name == "csv") return ReportFormat::Csv;
  if (name == "markdown" || name == "md") return ReportFormat::Markdown;
  throw ParameterError("unknown report format '" + name + "' (expected csv or markdown)");
}

namespace {

std::string fixed3(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  std::string s(buf);
  if (s == "-0.000") s = "0.000";
  return s;
}

double round3(double v) { return std::stod(fixed3(v)); }

std::string signed3(double v) {
  const std::string s = fixed3(v);
  if (s == "0.000") return "=0.000";
  return v > 0 ? "+" + s : s;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

constexpr const char* kHeader = "subject,scheme,accuracy,sensitivity,fpr_per_hour";

}  // namespace

std::vector<ReportRow> report_rows(const ExperimentResult& result) {
  std::vector<ReportRow> rows;
  for (const auto& s : result.subjects) {
    for (const auto& [scheme, m] : {std::pair{"baseline", &s.baseline}, std::pair{"distilled", &s.distilled}}) {
      rows.push_back({std::to_string(s.subject), scheme, m->accuracy, m->sensitivity, m->fpr_per_hour});
    }
  }
  return rows;
}

std::string to_csv(const std::vector<ReportRow>& rows) {
  std::string out = std::string(kHeader) + "\n";
  for (const auto& r : rows) {
    out += r.subject + "," + r.scheme + "," + fixed3(r.accuracy) + "," +
           (r.sensitivity ? fixed3(*r.sensitivity) : std::string()) + "," + fixed3(r.fpr_per_hour) + "\n";
  }
  return out;
}

std::vector<ReportRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kHeader) throw FormatError("report CSV: missing or unexpected header");
  std::vector<ReportRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, ',');
    if (f.size() != 5) throw FormatError("report CSV line " + std::to_string(lineno) + ": expected 5 fields");
    try {
      ReportRow r;
      r.subject = f[0];
      r.scheme = f[1];
      r.accuracy = std::stod(f[2]);
      if (!f[3].empty()) r.sensitivity = std::stod(f[3]);
      r.fpr_per_hour = std::stod(f[4]);
      rows.push_back(std::move(r));
    } catch (const std::logic_error&) {
      throw FormatError("report CSV line " + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

std::string to_markdown(const std::vector<ReportRow>& rows) {
  std::vector<std::string> subjects, schemes;
  std::map<std::pair<std::string, std::string>, const ReportRow*> cell;
  for (const auto& r : rows) {
    if (std::find(subjects.begin(), subjects.end(), r.subject) == subjects.end()) subjects.push_back(r.subject);
    if (std::find(schemes.begin(), schemes.end(), r.scheme) == schemes.end()) schemes.push_back(r.scheme);
    cell[{r.subject, r.scheme}] = &r;
  }
  std::ostringstream md;
  md << "| Subject |";
  for (const auto& s : schemes) md << ' ' << s << " Acc | " << s << " Sens | " << s << " FPR/h |";
  md << "\n|---|";
  for (std::size_t i = 0; i < schemes.size(); ++i) md << "---:|---:|---:|";
  md << '\n';

  // Averages are taken over the displayed (3-decimal) values.
  std::map<std::string, std::array<double, 3>> sums;
  std::map<std::string, std::array<std::size_t, 3>> counts;
  for (const auto& subj : subjects) {
    md << "| " << subj << " |";
    for (const auto& sch : schemes) {
      auto it = cell.find({subj, sch});
      if (it == cell.end()) {
        md << " n/a | n/a | n/a |";
        continue;
      }
      const ReportRow& r = *it->second;
      md << ' ' << fixed3(r.accuracy) << " | " << (r.sensitivity ? fixed3(*r.sensitivity) : "n/a") << " | "
         << fixed3(r.fpr_per_hour) << " |";
      auto& sum = sums[sch];
      auto& cnt = counts[sch];
      sum[0] += round3(r.accuracy);
      ++cnt[0];
      if (r.sensitivity) {
        sum[1] += round3(*r.sensitivity);
        ++cnt[1];
      }
      sum[2] += round3(r.fpr_per_hour);
      ++cnt[2];
    }
    md << '\n';
  }
  md << "| Average |";
  for (const auto& sch : schemes) {
    for (int k = 0; k < 3; ++k) {
      const auto n = counts[sch][static_cast<std::size_t>(k)];
      md << ' ' << (n == 0 ? std::string("n/a") : fixed3(sums[sch][static_cast<std::size_t>(k)] / static_cast<double>(n)))
         << " |";
    }
  }
  md << '\n';
  return md.str();
}

std::string ablation_csv(const AblationTable& table) {
  std::string out = "axis,setting,accuracy,sensitivity,fpr_per_hour,delta_accuracy,delta_sensitivity,delta_fpr\n";
  const auto sens = [](const Summary& s) { return s.sensitivity ? fixed3(*s.sensitivity) : std::string(); };
  out += to_string(table.axis) + ",naive," + fixed3(table.naive.accuracy) + "," + sens(table.naive) + "," +
         fixed3(table.naive.fpr_per_hour) + ",,,\n";
  for (const auto& r : table.rows) {
    const Summary& s = r.summary;
    std::string dsens;
    if (s.sensitivity && table.naive.sensitivity) dsens = signed3(*s.sensitivity - *table.naive.sensitivity);
    out += to_string(table.axis) + "," + r.setting + "," + fixed3(s.accuracy) + "," + sens(s) + "," +
           fixed3(s.fpr_per_hour) + "," + signed3(s.accuracy - table.naive.accuracy) + "," + dsens + "," +
           signed3(s.fpr_per_hour - table.naive.fpr_per_hour) + "\n";
  }
  return out;
}

std::string ablation_markdown(const AblationTable& table) {
  std::ostringstream md;
  md << "| " << to_string(table.axis) << " | Accuracy | Sensitivity | FPR/h |\n|---|---:|---:|---:|\n";
  const auto sens = [](const Summary& s) { return s.sensitivity ? fixed3(*s.sensitivity) : std::string("n/a"); };
  md << "| naive | " << fixed3(table.naive.accuracy) << " | " << sens(table.naive) << " | "
     << fixed3(table.naive.fpr_per_hour) << " |\n";
  for (const auto& r : table.rows) {
    const Summary& s = r.summary;
    md << "| " << r.setting << " | " << fixed3(s.accuracy) << " (" << signed3(s.accuracy - table.naive.accuracy)
       << ") | " << sens(s);
    if (s.sensitivity && table.naive.sensitivity) md << " (" << signed3(*s.sensitivity - *table.naive.sensitivity) << ")";
    // Lower FPR is better, so the sign annotation is on the raw difference.
    md << " | " << fixed3(s.fpr_per_hour) << " (" << signed3(s.fpr_per_hour - table.naive.fpr_per_hour) << ") |\n";
  }
  return md.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed for " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void emit_report(const ExperimentResult& result, ReportFormat format, const std::filesystem::path& path) {
  const auto rows = report_rows(result);
  write_text(path, format == ReportFormat::Csv ? to_csv(rows) : to_markdown(rows));
}

}  // namespace dbkd
