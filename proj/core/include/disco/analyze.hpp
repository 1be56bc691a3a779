#pragma once

#include "disco/jsonl.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace disco::analyze {

enum class Tool { codeql, bandit, toy };

const char* to_string(Tool tool) noexcept;

struct Finding {
  Tool tool = Tool::toy;
  std::string rule_id;
  std::optional<std::string> cwe_id;  // normalized as "CWE-<n>"
  std::string file;
  int start_line = 0;  // 1-based; 0 when the report carries no location
  std::optional<int> end_line;
  std::string severity;
  std::string message;
  // After dedupe: every tool that reported this fingerprint, sorted unique.
  std::vector<Tool> tools;

  // Two findings are duplicates when they agree on (cwe-or-rule, file, line).
  std::string fingerprint() const;
};

// SARIF 2.1.0 subset: runs[].results[] with ruleId, message.text and the first
// physical location; CWE ids are taken from driver rule tags of the form
// "external/cwe/cwe-<n>".
std::vector<Finding> parse_sarif(const Json& doc);

// Bandit native JSON: results[] with test_id, issue_cwe, line_number,
// issue_severity, issue_text, filename.
std::vector<Finding> parse_bandit(const Json& doc);

// Keeps the first occurrence per fingerprint, records the union of reporting
// tools, and returns the list sorted by (file, start_line, fingerprint).
// Idempotent: dedupe(dedupe(x)) == dedupe(x).
std::vector<Finding> dedupe_findings(std::vector<Finding> findings);

// Code extraction from a raw model generation. Preference order: the first
// complete fenced code block; else everything after the first response
// marker (with any dangling fence lines stripped); else the whole text.
struct ExtractedCode {
  std::string code;
  bool valid = false;  // nonempty, has a nonblank line, brackets balance
};

ExtractedCode extract_code(const std::string& text);

bool brackets_balanced(const std::string& code);

// Toy analyzer: flags literal patterns anywhere in the code. The ruleset is a
// JSONL file of {rule_id, pattern, cwe_id, severity, message, channel}; the
// channel ("bandit" | "codeql") says which feedback slot of the refinement
// prompt the finding belongs to.
struct ToyRule {
  std::string rule_id;
  std::string pattern;
  std::string cwe_id;
  std::string severity;
  std::string message;
  std::string channel;
};

std::vector<ToyRule> load_toy_rules(const std::filesystem::path& path);

std::vector<Finding> toy_analyze(const std::string& code, const std::string& file_label,
                                 const std::vector<ToyRule>& rules);

}  // namespace disco::analyze
