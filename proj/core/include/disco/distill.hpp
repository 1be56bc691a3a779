#pragma once

#include "disco/jsonl.hpp"
#include "disco/knowledge.hpp"
#include "disco/llm_client.hpp"

#include <string>
#include <vector>

namespace disco::distill {

// Sectioned-response parsing. Keys must appear at line starts, in the given
// order; a key may repeat (the generation format uses REASON: twice). Code
// fence lines inside sections are stripped and sections are trimmed.
std::vector<std::string> parse_sections(const std::string& text,
                                        const std::vector<std::string>& keys);

struct ParsedGeneration {
  std::string vul_code;
  std::string reason_vul;
  std::string sec_code;
  std::string reason_sec;
  std::string instruction;
};

// VUL: / REASON: / SEC: / REASON: / INST:. A missing or out-of-order key
// raises a parse error naming the first missing key; an empty section raises
// a validation error naming its key.
ParsedGeneration parse_generation(const std::string& text);

struct GenerationRecord {
  std::string id;  // "gen-<index>" in prompt order
  knowledge::PromptRecord prompt;
  std::string raw_text;
  ParsedGeneration parsed;
};

Json generation_to_json(const GenerationRecord& record);
GenerationRecord generation_from_json(const Json& row);

struct DistillOptions {
  double temperature = 0.7;
  int max_tokens = 2048;
  int workers = 1;
};

struct DistillFailure {
  std::string id;
  std::string error;
};

struct DistillOutcome {
  std::vector<GenerationRecord> records;  // prompt order
  std::vector<DistillFailure> failures;   // prompt order
};

// One completion per prompt through a bounded worker pool; results committed
// in input order. Individual parse failures are reported, not fatal.
DistillOutcome run_distillation(const std::vector<knowledge::PromptRecord>& prompts,
                                llm::TextGenClient& client,
                                const DistillOptions& options);

}  // namespace disco::distill
