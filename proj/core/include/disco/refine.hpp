#pragma once

#include "disco/analyze.hpp"
#include "disco/distill.hpp"
#include "disco/llm_client.hpp"

#include <functional>
#include <string>
#include <vector>

namespace disco::refine {

struct ParsedRefinement {
  std::string fixed_code;
  std::string fix_reason;
};

// FIX: / REASON:, same section rules as the generation format.
ParsedRefinement parse_refinement(const std::string& text);

// "- line <n>: [<cwe-or-rule>] <message>" per finding; "None" when empty.
std::string render_feedback(const std::vector<analyze::Finding>& findings);

// Fills [SECURE CODE] and the two analyzer feedback slots of the refinement
// template.
std::string render_refine_prompt(const std::string& template_text,
                                 const std::string& code,
                                 const std::vector<analyze::Finding>& bandit_findings,
                                 const std::vector<analyze::Finding>& codeql_findings);

struct RefinementRound {
  int round_index = 0;  // 1-based
  std::vector<analyze::Finding> bandit_findings;
  std::vector<analyze::Finding> codeql_findings;
  std::string fixed_code;
  std::string fix_reason;
  bool parse_ok = true;
};

struct RefinedRecord {
  distill::GenerationRecord gen;  // never mutated: x, y-, r- stay as generated
  std::string final_sec_code;     // the only field refinement may change
  int refine_rounds = 0;          // completion calls actually made
  bool refined = false;           // final code differs from the original
  bool still_insecure = false;    // findings remain on the final code
  bool kept_on_parse_failure = false;
  std::vector<RefinementRound> rounds;
};

Json refined_to_json(const RefinedRecord& record);
RefinedRecord refined_from_json(const Json& row);

// One analyzer per feedback channel of the refinement prompt.
using ChannelAnalyzer = std::function<std::vector<analyze::Finding>(
    const std::string& code, const std::string& file_label)>;

struct RefineOptions {
  int max_rounds = 1;
  double temperature = 0.0;
  int max_tokens = 2048;
};

// Re-analyzes the secure code each round and asks the service for a fix while
// findings remain. A response that fails to parse keeps the pre-round code
// and flags the record instead of aborting.
RefinedRecord refine_loop(const distill::GenerationRecord& record,
                          const ChannelAnalyzer& bandit,
                          const ChannelAnalyzer& codeql,
                          const std::string& template_text,
                          llm::TextGenClient& client,
                          const RefineOptions& options);

}  // namespace disco::refine
