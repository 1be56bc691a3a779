#pragma once

#include "disco/metrics.hpp"

#include <optional>
#include <string>
#include <vector>

namespace disco::report {

// One table row: a labelled run with whichever metrics were measured for it.
struct ReportRow {
  std::string label;
  std::optional<metrics::SecuritySummary> security;
  std::optional<double> pass_at_1;
  std::optional<double> pass_at_5;
};

// Plain-text table (InS, I@100, P@1, P@5 columns, "N/A" for absent values)
// followed by a bar listing of the top CWEs pooled across runs.
std::string render_report(const std::vector<ReportRow>& rows, int top_cwes = 10);

}  // namespace disco::report
