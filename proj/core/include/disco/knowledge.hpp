#pragma once

#include "disco/jsonl.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace disco::knowledge {

// One curated security-issue entry: a CWE id, the issue headline, a prose
// description, and where the entry was collected from.
struct SecurityIssueRecord {
  std::string cwe_id;       // "CWE-78"
  std::string issue_title;  // "OS command injection"
  std::string description;
  std::string source;       // provenance label, e.g. "cwe-top25-2023"
};

struct PackageRecord {
  std::string name;    // "requests"
  std::string domain;  // "http clients"
};

enum class TemplateKind { issue_only, issue_package };

const char* to_string(TemplateKind kind) noexcept;

struct PromptRecord {
  TemplateKind kind = TemplateKind::issue_only;
  SecurityIssueRecord issue;
  std::optional<PackageRecord> package;
  std::string rendered_text;
};

// Loads and validates a JSONL knowledge base. Every record needs nonempty
// cwe_id / issue_title / description / source; duplicate (cwe_id,
// issue_title) pairs and malformed lines are rejected with line numbers.
std::vector<SecurityIssueRecord> load_knowledge_base(const std::filesystem::path& path);

std::vector<PackageRecord> load_packages(const std::filesystem::path& path);

// Fills [ISSUE] / [DESCRIPTION] / [PACKAGE] in the generation template. When
// no package is given the "[PACKAGE] " slot (with its trailing space)
// disappears, which yields the issue-only wording.
std::string render_generation_prompt(const std::string& template_text,
                                     const SecurityIssueRecord& issue,
                                     const std::optional<PackageRecord>& package);

// Emits one issue-only prompt per issue, then fills up to target_count with a
// uniform sample (without replacement) from the issue x package cross
// product. The cross product is put in a canonical sorted order before
// sampling so results depend only on record contents and the seed. Throws a
// capacity error when target_count exceeds issues + issues*packages.
std::vector<PromptRecord> generate_prompts(const std::vector<SecurityIssueRecord>& issues,
                                           const std::vector<PackageRecord>& packages,
                                           const std::string& template_text,
                                           std::size_t target_count,
                                           std::uint64_t seed);

Json prompt_to_json(const PromptRecord& prompt);
PromptRecord prompt_from_json(const Json& row);

}  // namespace disco::knowledge
