#include "disco/metrics.hpp"

#include "disco/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <map>

namespace disco::metrics {

double pass_at_k(int n, int c, int k) {
  if (n < 0 || c < 0 || c > n) {
    throw Error(ErrorKind::validation,
                fmt::format("pass@k: need 0 <= c <= n, got n={} c={}", n, c));
  }
  if (k < 1 || k > n) {
    throw Error(ErrorKind::validation,
                fmt::format("pass@k: need 1 <= k <= n, got n={} k={}", n, k));
  }
  // 1 - prod_{i=0}^{k-1} (n - c - i) / (n - i); a zero factor appears exactly
  // when every size-k draw must contain a correct sample.
  double fail = 1.0;
  for (int i = 0; i < k; ++i) {
    const int numer = n - c - i;
    if (numer <= 0) return 1.0;
    fail *= static_cast<double>(numer) / static_cast<double>(n - i);
  }
  return 1.0 - fail;
}

double mean_pass_at_k(const std::vector<ProblemResult>& problems, int k) {
  if (problems.empty()) {
    throw Error(ErrorKind::undefined_metric, "pass@k over an empty problem set");
  }
  double total = 0.0;
  for (const ProblemResult& p : problems) total += pass_at_k(p.n, p.c, k);
  return total / static_cast<double>(problems.size());
}

namespace {

// Numeric ordering for histogram ties: "CWE-78" by its number; anything else
// (including "uncategorized") after all numbered entries, alphabetically.
std::pair<long, std::string> cwe_order_key(const std::string& cwe_id) {
  constexpr std::string_view prefix = "CWE-";
  if (cwe_id.size() > prefix.size() && cwe_id.compare(0, prefix.size(), prefix) == 0) {
    const std::string digits = cwe_id.substr(prefix.size());
    if (std::all_of(digits.begin(), digits.end(),
                    [](unsigned char ch) { return std::isdigit(ch); })) {
      return {std::stol(digits), cwe_id};
    }
  }
  return {std::numeric_limits<long>::max(), cwe_id};
}

}  // namespace

std::vector<CweCount> cwe_histogram(const std::vector<analyze::Finding>& findings) {
  std::map<std::string, int> counts;
  for (const analyze::Finding& finding : findings) {
    counts[finding.cwe_id ? *finding.cwe_id : "uncategorized"] += 1;
  }
  std::vector<CweCount> histogram;
  histogram.reserve(counts.size());
  for (const auto& [cwe, count] : counts) histogram.push_back({cwe, count});
  std::sort(histogram.begin(), histogram.end(), [](const CweCount& a, const CweCount& b) {
    if (a.count != b.count) return a.count > b.count;
    return cwe_order_key(a.cwe_id) < cwe_order_key(b.cwe_id);
  });
  return histogram;
}

SecurityEvalResult security_eval(const std::vector<GenerationInput>& generations,
                                 const AnalyzerFn& analyzer) {
  SecurityEvalResult result;
  std::vector<analyze::Finding> all_findings;
  for (const GenerationInput& gen : generations) {
    GenerationDetail detail;
    detail.id = gen.id;
    const analyze::ExtractedCode extracted = analyze::extract_code(gen.text);
    detail.valid = extracted.valid;
    detail.code = extracted.code;
    result.summary.total += 1;
    if (extracted.valid) {
      result.summary.valid += 1;
      detail.findings = analyze::dedupe_findings(analyzer(extracted.code, gen.id));
      if (!detail.findings.empty()) result.summary.insecure += 1;
      result.summary.findings += static_cast<int>(detail.findings.size());
      all_findings.insert(all_findings.end(), detail.findings.begin(),
                          detail.findings.end());
    }
    result.details.push_back(std::move(detail));
  }
  if (result.summary.valid > 0) {
    result.summary.insecurity = 100.0 * result.summary.insecure / result.summary.valid;
    result.summary.issues_per_100 = 100.0 * result.summary.findings / result.summary.valid;
  }
  result.summary.histogram = cwe_histogram(all_findings);
  return result;
}

namespace {

Json finding_to_json(const analyze::Finding& finding) {
  Json row{
      {"tool", analyze::to_string(finding.tool)},
      {"rule_id", finding.rule_id},
      {"file", finding.file},
      {"start_line", finding.start_line},
      {"severity", finding.severity},
      {"message", finding.message},
  };
  if (finding.cwe_id) row["cwe_id"] = *finding.cwe_id;
  if (finding.end_line) row["end_line"] = *finding.end_line;
  Json tools = Json::array();
  for (analyze::Tool t : finding.tools) tools.push_back(analyze::to_string(t));
  row["tools"] = tools;
  return row;
}

}  // namespace

Json summary_to_json(const SecuritySummary& summary) {
  Json doc{
      {"total", summary.total},
      {"valid", summary.valid},
      {"insecure", summary.insecure},
      {"findings", summary.findings},
  };
  doc["insecurity"] = summary.insecurity ? Json(*summary.insecurity) : Json(nullptr);
  doc["issues_per_100"] =
      summary.issues_per_100 ? Json(*summary.issues_per_100) : Json(nullptr);
  Json histogram = Json::array();
  for (const CweCount& entry : summary.histogram) {
    histogram.push_back({{"cwe_id", entry.cwe_id}, {"count", entry.count}});
  }
  doc["cwe_histogram"] = histogram;
  return doc;
}

SecuritySummary summary_from_json(const Json& doc) {
  SecuritySummary summary;
  summary.total = doc.value("total", 0);
  summary.valid = doc.value("valid", 0);
  summary.insecure = doc.value("insecure", 0);
  summary.findings = doc.value("findings", 0);
  if (doc.contains("insecurity") && doc["insecurity"].is_number()) {
    summary.insecurity = doc["insecurity"].get<double>();
  }
  if (doc.contains("issues_per_100") && doc["issues_per_100"].is_number()) {
    summary.issues_per_100 = doc["issues_per_100"].get<double>();
  }
  if (doc.contains("cwe_histogram")) {
    for (const Json& row : doc["cwe_histogram"]) {
      summary.histogram.push_back({row.value("cwe_id", std::string{"uncategorized"}),
                                   row.value("count", 0)});
    }
  }
  return summary;
}

Json detail_to_json(const GenerationDetail& detail) {
  Json row{
      {"id", detail.id},
      {"valid", detail.valid},
      {"code", detail.code},
  };
  Json findings = Json::array();
  for (const analyze::Finding& finding : detail.findings) {
    findings.push_back(finding_to_json(finding));
  }
  row["findings"] = findings;
  return row;
}

Json utility_to_json(const UtilitySummary& summary) {
  Json problems = Json::array();
  for (const ProblemResult& p : summary.problems) {
    problems.push_back({{"problem_id", p.problem_id}, {"n", p.n}, {"c", p.c}});
  }
  return Json{
      {"k", summary.k},
      {"mean_pass_at_k", summary.mean_pass},
      {"problems", problems},
  };
}

UtilitySummary utility_from_json(const Json& doc) {
  UtilitySummary summary;
  summary.k = doc.value("k", 0);
  summary.mean_pass = doc.value("mean_pass_at_k", 0.0);
  if (doc.contains("problems")) {
    for (const Json& row : doc["problems"]) {
      summary.problems.push_back({row.value("problem_id", std::string{}),
                                  row.value("n", 0), row.value("c", 0)});
    }
  }
  return summary;
}

}  // namespace disco::metrics
