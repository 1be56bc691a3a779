#pragma once

#include "disco/jsonl.hpp"
#include "disco/refine.hpp"

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace disco::corpus {

// One alignment example: an instruction, the rejected/chosen code pair with
// their reasons, issue metadata, and the rendered reasoning paragraph that
// training sequences carry between instruction and code.
struct PreferenceInstance {
  std::string id;
  std::string x;        // instruction
  std::string y_minus;  // insecure code
  std::string r_minus;  // why the insecure version is vulnerable
  std::string y_plus;   // secure (possibly refined) code
  std::string r_plus;   // why the secure version is fixed
  std::string cwe_id;
  std::string issue_title;
  std::string description;
  std::string reasoning;  // rendered template over the fields above
  bool refined = false;
  int refine_rounds = 0;
  bool still_insecure = false;
};

Json instance_to_json(const PreferenceInstance& instance);
PreferenceInstance instance_from_json(const Json& row);
std::vector<PreferenceInstance> load_instances(const std::filesystem::path& path);
void save_instances(const std::filesystem::path& path,
                    const std::vector<PreferenceInstance>& instances);

// Fills [CWE-ID], [ISSUE], [DESCRIPTION], [$r^{+}$], [$r^{-}$] in the
// reasoning template (note: r+ before r-).
std::string render_reasoning(const std::string& template_text, const std::string& cwe_id,
                             const std::string& issue_title, const std::string& description,
                             const std::string& r_plus, const std::string& r_minus);

// Refined records -> preference instances. Instances whose final secure code
// still carries findings are kept (and flagged) unless drop_insecure is set.
std::vector<PreferenceInstance> build_corpus(const std::vector<refine::RefinedRecord>& records,
                                             const std::string& reasoning_template,
                                             bool drop_insecure);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

// Seeded shuffle, then contiguous cut at sizes chosen by largest-remainder
// rounding of n * proportion (ties to the earlier split). Proportions must be
// nonnegative and sum to 1 within 1e-9.
SplitIndices split_indices(std::size_t n, const std::array<double, 3>& proportions,
                           std::uint64_t seed);

// The published dataset's train/validation/test ratio.
std::array<double, 3> reference_split_proportions();

struct DatasetStats {
  std::size_t count = 0;
  std::size_t distinct_cwes = 0;
  double mean_loc_minus = 0.0;  // nonblank lines
  double mean_loc_plus = 0.0;
  double pct_still_insecure = 0.0;
  double mean_char_diff = 0.0;  // Levenshtein distance between code bodies
  double mean_pct_masked_minus = 0.0;  // security-relevant token share, %
  double mean_pct_masked_plus = 0.0;
};

DatasetStats dataset_stats(const std::vector<PreferenceInstance>& instances);
Json stats_to_json(const DatasetStats& stats);

std::size_t count_nonblank_lines(const std::string& text);
std::size_t levenshtein(const std::string& a, const std::string& b);

// Splits instances into in-distribution (CWE not listed) and held-out
// out-of-distribution (CWE listed) subsets.
struct OodSplit {
  std::vector<PreferenceInstance> in_distribution;
  std::vector<PreferenceInstance> held_out;
};

OodSplit ood_filter(const std::vector<PreferenceInstance>& instances,
                    const std::set<std::string>& held_out_cwes);

}  // namespace disco::corpus
