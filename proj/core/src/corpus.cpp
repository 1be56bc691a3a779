#include "disco/corpus.hpp"

#include "disco/errors.hpp"
#include "disco/rng.hpp"
#include "disco/tokenmask.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace disco::corpus {

Json instance_to_json(const PreferenceInstance& instance) {
  return Json{
      {"id", instance.id},
      {"x", instance.x},
      {"y_minus", instance.y_minus},
      {"r_minus", instance.r_minus},
      {"y_plus", instance.y_plus},
      {"r_plus", instance.r_plus},
      {"cwe_id", instance.cwe_id},
      {"issue_title", instance.issue_title},
      {"description", instance.description},
      {"reasoning", instance.reasoning},
      {"refined", instance.refined},
      {"refine_rounds", instance.refine_rounds},
      {"still_insecure", instance.still_insecure},
  };
}

PreferenceInstance instance_from_json(const Json& row) {
  PreferenceInstance instance;
  instance.id = row.value("id", "");
  instance.x = row.value("x", "");
  instance.y_minus = row.value("y_minus", "");
  instance.r_minus = row.value("r_minus", "");
  instance.y_plus = row.value("y_plus", "");
  instance.r_plus = row.value("r_plus", "");
  instance.cwe_id = row.value("cwe_id", "");
  instance.issue_title = row.value("issue_title", "");
  instance.description = row.value("description", "");
  instance.reasoning = row.value("reasoning", "");
  instance.refined = row.value("refined", false);
  instance.refine_rounds = row.value("refine_rounds", 0);
  instance.still_insecure = row.value("still_insecure", false);
  return instance;
}

std::vector<PreferenceInstance> load_instances(const std::filesystem::path& path) {
  std::vector<PreferenceInstance> instances;
  std::size_t line_no = 0;
  for (const Json& row : read_jsonl(path)) {
    ++line_no;
    PreferenceInstance instance = instance_from_json(row);
    if (instance.x.empty() || instance.y_minus.empty() || instance.y_plus.empty()) {
      throw Error(ErrorKind::validation,
                  fmt::format("{}:{}: incomplete preference instance", path.string(),
                              line_no));
    }
    instances.push_back(std::move(instance));
  }
  return instances;
}

void save_instances(const std::filesystem::path& path,
                    const std::vector<PreferenceInstance>& instances) {
  std::vector<Json> rows;
  rows.reserve(instances.size());
  for (const PreferenceInstance& instance : instances) {
    rows.push_back(instance_to_json(instance));
  }
  write_jsonl(path, rows);
}

namespace {

void replace_slot(std::string& text, std::string_view slot, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
}

}  // namespace

std::string render_reasoning(const std::string& template_text, const std::string& cwe_id,
                             const std::string& issue_title, const std::string& description,
                             const std::string& r_plus, const std::string& r_minus) {
  std::string text = template_text;
  while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
  replace_slot(text, "[CWE-ID]", cwe_id);
  replace_slot(text, "[ISSUE]", issue_title);
  replace_slot(text, "[DESCRIPTION]", description);
  replace_slot(text, "[$r^{+}$]", r_plus);
  replace_slot(text, "[$r^{-}$]", r_minus);
  return text;
}

std::vector<PreferenceInstance> build_corpus(const std::vector<refine::RefinedRecord>& records,
                                             const std::string& reasoning_template,
                                             bool drop_insecure) {
  std::vector<PreferenceInstance> instances;
  instances.reserve(records.size());
  for (const refine::RefinedRecord& record : records) {
    if (drop_insecure && record.still_insecure) continue;
    PreferenceInstance instance;
    instance.id = record.gen.id;
    instance.x = record.gen.parsed.instruction;
    instance.y_minus = record.gen.parsed.vul_code;
    instance.r_minus = record.gen.parsed.reason_vul;
    instance.y_plus = record.final_sec_code;
    instance.r_plus = record.gen.parsed.reason_sec;
    instance.cwe_id = record.gen.prompt.issue.cwe_id;
    instance.issue_title = record.gen.prompt.issue.issue_title;
    instance.description = record.gen.prompt.issue.description;
    instance.reasoning =
        render_reasoning(reasoning_template, instance.cwe_id, instance.issue_title,
                         instance.description, instance.r_plus, instance.r_minus);
    instance.refined = record.refined;
    instance.refine_rounds = record.refine_rounds;
    instance.still_insecure = record.still_insecure;
    instances.push_back(std::move(instance));
  }
  return instances;
}

SplitIndices split_indices(std::size_t n, const std::array<double, 3>& proportions,
                           std::uint64_t seed) {
  double sum = 0.0;
  for (double p : proportions) {
    if (p < 0.0) {
      throw Error(ErrorKind::validation, "split proportions must be nonnegative");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorKind::validation,
                fmt::format("split proportions sum to {:.12f}, expected 1", sum));
  }

  // Largest-remainder rounding of the quotas n * p_i.
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double quota = static_cast<double>(n) * proportions[i];
    sizes[i] = static_cast<std::size_t>(std::floor(quota));
    remainders[i] = quota - std::floor(quota);
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (remainders[a] != remainders[b]) return remainders[a] > remainders[b];
    return a < b;  // ties to the earlier split
  });
  for (std::size_t i = 0; assigned < n; ++i) {
    sizes[order[i % 3]] += 1;
    ++assigned;
  }

  std::vector<std::size_t> indices(n);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(indices);

  SplitIndices split;
  auto cursor = indices.begin();
  split.train.assign(cursor, cursor + static_cast<std::ptrdiff_t>(sizes[0]));
  cursor += static_cast<std::ptrdiff_t>(sizes[0]);
  split.validation.assign(cursor, cursor + static_cast<std::ptrdiff_t>(sizes[1]));
  cursor += static_cast<std::ptrdiff_t>(sizes[1]);
  split.test.assign(cursor, cursor + static_cast<std::ptrdiff_t>(sizes[2]));
  return split;
}

std::array<double, 3> reference_split_proportions() {
  constexpr double total = 9987.0;
  return {9489.0 / total, 298.0 / total, 200.0 / total};
}

std::size_t count_nonblank_lines(const std::string& text) {
  std::size_t count = 0;
  bool nonblank = false;
  for (char c : text) {
    if (c == '\n') {
      if (nonblank) ++count;
      nonblank = false;
    } else if (c != ' ' && c != '\t' && c != '\r') {
      nonblank = true;
    }
  }
  if (nonblank) ++count;
  return count;
}

std::size_t levenshtein(const std::string& a, const std::string& b) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<std::size_t> prev(m + 1);
  std::vector<std::size_t> curr(m + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= n; ++i) {
    curr[0] = i;
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t substitute = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, substitute});
    }
    std::swap(prev, curr);
  }
  return prev[m];
}

DatasetStats dataset_stats(const std::vector<PreferenceInstance>& instances) {
  DatasetStats stats;
  stats.count = instances.size();
  if (instances.empty()) return stats;
  std::set<std::string> cwes;
  double loc_minus = 0.0;
  double loc_plus = 0.0;
  double still = 0.0;
  double char_diff = 0.0;
  double pct_minus = 0.0;
  double pct_plus = 0.0;
  for (const PreferenceInstance& instance : instances) {
    cwes.insert(instance.cwe_id);
    loc_minus += static_cast<double>(count_nonblank_lines(instance.y_minus));
    loc_plus += static_cast<double>(count_nonblank_lines(instance.y_plus));
    if (instance.still_insecure) still += 1.0;
    char_diff += static_cast<double>(levenshtein(instance.y_minus, instance.y_plus));
    const TokenSeq plus_tokens = encode_bytes(instance.y_plus);
    const TokenSeq minus_tokens = encode_bytes(instance.y_minus);
    const tokenmask::MaskPair masks = tokenmask::compute_masks({}, plus_tokens, minus_tokens);
    pct_minus += masks.pct_minus;
    pct_plus += masks.pct_plus;
  }
  const double n = static_cast<double>(instances.size());
  stats.distinct_cwes = cwes.size();
  stats.mean_loc_minus = loc_minus / n;
  stats.mean_loc_plus = loc_plus / n;
  stats.pct_still_insecure = 100.0 * still / n;
  stats.mean_char_diff = char_diff / n;
  stats.mean_pct_masked_minus = pct_minus / n;
  stats.mean_pct_masked_plus = pct_plus / n;
  return stats;
}

Json stats_to_json(const DatasetStats& stats) {
  return Json{
      {"count", stats.count},
      {"distinct_cwes", stats.distinct_cwes},
      {"mean_loc_minus", stats.mean_loc_minus},
      {"mean_loc_plus", stats.mean_loc_plus},
      {"pct_still_insecure", stats.pct_still_insecure},
      {"mean_char_diff", stats.mean_char_diff},
      {"mean_pct_masked_minus", stats.mean_pct_masked_minus},
      {"mean_pct_masked_plus", stats.mean_pct_masked_plus},
  };
}

OodSplit ood_filter(const std::vector<PreferenceInstance>& instances,
                    const std::set<std::string>& held_out_cwes) {
  OodSplit split;
  for (const PreferenceInstance& instance : instances) {
    if (held_out_cwes.count(instance.cwe_id)) {
      split.held_out.push_back(instance);
    } else {
      split.in_distribution.push_back(instance);
    }
  }
  return split;
}

}  // namespace disco::corpus
