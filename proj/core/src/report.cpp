#include "disco/report.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <map>

namespace disco::report {

namespace {

std::string fmt_pct(const std::optional<double>& value) {
  return value ? fmt::format("{:.1f}", *value) : std::string{"N/A"};
}

std::string fmt_pass(const std::optional<double>& value) {
  return value ? fmt::format("{:.3f}", *value) : std::string{"N/A"};
}

}  // namespace

std::string render_report(const std::vector<ReportRow>& rows, int top_cwes) {
  std::size_t label_width = 5;
  for (const ReportRow& row : rows) label_width = std::max(label_width, row.label.size());

  std::string out;
  out += fmt::format("{:<{}}  {:>8}  {:>8}  {:>7}  {:>7}\n", "run", label_width,
                     "InS%", "I@100", "P@1", "P@5");
  out += std::string(label_width + 2 + 8 + 2 + 8 + 2 + 7 + 2 + 7, '-');
  out += '\n';
  for (const ReportRow& row : rows) {
    std::optional<double> insecurity;
    std::optional<double> issues;
    if (row.security) {
      insecurity = row.security->insecurity;
      issues = row.security->issues_per_100;
    }
    out += fmt::format("{:<{}}  {:>8}  {:>8}  {:>7}  {:>7}\n", row.label, label_width,
                       fmt_pct(insecurity), fmt_pct(issues), fmt_pass(row.pass_at_1),
                       fmt_pass(row.pass_at_5));
  }

  // Pool CWE counts across all runs that carry a security summary.
  std::map<std::string, int> pooled;
  for (const ReportRow& row : rows) {
    if (!row.security) continue;
    for (const metrics::CweCount& entry : row.security->histogram) {
      pooled[entry.cwe_id] += entry.count;
    }
  }
  if (!pooled.empty() && top_cwes > 0) {
    std::vector<metrics::CweCount> ranked;
    ranked.reserve(pooled.size());
    for (const auto& [cwe, count] : pooled) ranked.push_back({cwe, count});
    std::sort(ranked.begin(), ranked.end(),
              [](const metrics::CweCount& a, const metrics::CweCount& b) {
                if (a.count != b.count) return a.count > b.count;
                return a.cwe_id < b.cwe_id;
              });
    if (static_cast<int>(ranked.size()) > top_cwes) ranked.resize(top_cwes);
    const int max_count = ranked.front().count;
    std::size_t cwe_width = 3;
    for (const metrics::CweCount& entry : ranked) {
      cwe_width = std::max(cwe_width, entry.cwe_id.size());
    }
    out += fmt::format("\ntop CWEs (pooled findings)\n");
    for (const metrics::CweCount& entry : ranked) {
      const int bar = max_count > 0 ? std::max(1, entry.count * 40 / max_count) : 0;
      out += fmt::format("{:<{}}  {} {}\n", entry.cwe_id, cwe_width,
                         std::string(static_cast<std::size_t>(bar), '#'), entry.count);
    }
  }
  return out;
}

}  // namespace disco::report
