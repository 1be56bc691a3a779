#include "disco/analyze.hpp"

#include "disco/errors.hpp"
#include "disco/tokens.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <sstream>

namespace disco::analyze {

const char* to_string(Tool tool) noexcept {
  switch (tool) {
    case Tool::codeql: return "codeql";
    case Tool::bandit: return "bandit";
    case Tool::toy: return "toy";
  }
  return "unknown";
}

std::string Finding::fingerprint() const {
  const std::string key =
      cwe_id ? *cwe_id : fmt::format("{}:{}", to_string(tool), rule_id);
  return fmt::format("{}|{}|{}", key, file, start_line);
}

namespace {

// "external/cwe/cwe-078" -> "CWE-78"
std::optional<std::string> cwe_from_tag(const std::string& tag) {
  constexpr std::string_view prefix = "external/cwe/cwe-";
  if (tag.size() <= prefix.size() || tag.compare(0, prefix.size(), prefix) != 0) {
    return std::nullopt;
  }
  const std::string digits = tag.substr(prefix.size());
  if (digits.empty() ||
      !std::all_of(digits.begin(), digits.end(),
                   [](unsigned char c) { return std::isdigit(c); })) {
    return std::nullopt;
  }
  return fmt::format("CWE-{}", std::stol(digits));
}

struct RuleInfo {
  std::optional<std::string> cwe;
  std::string default_level;
};

}  // namespace

std::vector<Finding> parse_sarif(const Json& doc) {
  if (!doc.is_object() || !doc.contains("runs") || !doc["runs"].is_array()) {
    throw Error(ErrorKind::parse, "SARIF document: missing 'runs' array");
  }
  std::vector<Finding> findings;
  std::size_t run_index = 0;
  for (const Json& run : doc["runs"]) {
    std::map<std::string, RuleInfo> rules;
    if (run.contains("tool") && run["tool"].contains("driver") &&
        run["tool"]["driver"].contains("rules")) {
      const Json& rule_list = run["tool"]["driver"]["rules"];
      if (!rule_list.is_array()) {
        throw Error(ErrorKind::parse,
                    fmt::format("SARIF runs[{}].tool.driver.rules: not an array", run_index));
      }
      for (const Json& rule : rule_list) {
        if (!rule.contains("id") || !rule["id"].is_string()) continue;
        RuleInfo info;
        if (rule.contains("properties") && rule["properties"].contains("tags") &&
            rule["properties"]["tags"].is_array()) {
          for (const Json& tag : rule["properties"]["tags"]) {
            if (!tag.is_string()) continue;
            if (auto cwe = cwe_from_tag(tag.get<std::string>())) {
              info.cwe = cwe;
              break;
            }
          }
        }
        if (rule.contains("defaultConfiguration") &&
            rule["defaultConfiguration"].contains("level") &&
            rule["defaultConfiguration"]["level"].is_string()) {
          info.default_level = rule["defaultConfiguration"]["level"].get<std::string>();
        }
        rules[rule["id"].get<std::string>()] = std::move(info);
      }
    }

    if (!run.contains("results") || !run["results"].is_array()) {
      throw Error(ErrorKind::parse,
                  fmt::format("SARIF runs[{}]: missing 'results' array", run_index));
    }
    std::size_t result_index = 0;
    for (const Json& result : run["results"]) {
      if (!result.contains("ruleId") || !result["ruleId"].is_string()) {
        throw Error(ErrorKind::parse,
                    fmt::format("SARIF runs[{}].results[{}]: missing 'ruleId'",
                                run_index, result_index));
      }
      Finding finding;
      finding.tool = Tool::codeql;
      finding.rule_id = result["ruleId"].get<std::string>();
      const auto rule_it = rules.find(finding.rule_id);
      if (rule_it != rules.end()) {
        finding.cwe_id = rule_it->second.cwe;
        finding.severity = rule_it->second.default_level;
      }
      if (result.contains("level") && result["level"].is_string()) {
        finding.severity = result["level"].get<std::string>();
      }
      if (finding.severity.empty()) finding.severity = "warning";
      if (result.contains("message") && result["message"].contains("text") &&
          result["message"]["text"].is_string()) {
        finding.message = result["message"]["text"].get<std::string>();
      }
      if (result.contains("locations") && result["locations"].is_array() &&
          !result["locations"].empty()) {
        const Json& loc = result["locations"][0];
        if (loc.contains("physicalLocation")) {
          const Json& phys = loc["physicalLocation"];
          if (phys.contains("artifactLocation") &&
              phys["artifactLocation"].contains("uri") &&
              phys["artifactLocation"]["uri"].is_string()) {
            finding.file = phys["artifactLocation"]["uri"].get<std::string>();
          }
          if (phys.contains("region")) {
            const Json& region = phys["region"];
            if (region.contains("startLine") && region["startLine"].is_number_integer()) {
              finding.start_line = region["startLine"].get<int>();
            }
            if (region.contains("endLine") && region["endLine"].is_number_integer()) {
              finding.end_line = region["endLine"].get<int>();
            }
          }
        }
      }
      finding.tools = {Tool::codeql};
      findings.push_back(std::move(finding));
      ++result_index;
    }
    ++run_index;
  }
  return findings;
}

std::vector<Finding> parse_bandit(const Json& doc) {
  if (!doc.is_object() || !doc.contains("results") || !doc["results"].is_array()) {
    throw Error(ErrorKind::parse, "Bandit document: missing 'results' array");
  }
  std::vector<Finding> findings;
  std::size_t index = 0;
  for (const Json& result : doc["results"]) {
    if (!result.contains("test_id") || !result["test_id"].is_string()) {
      throw Error(ErrorKind::parse,
                  fmt::format("Bandit results[{}]: missing 'test_id'", index));
    }
    Finding finding;
    finding.tool = Tool::bandit;
    finding.rule_id = result["test_id"].get<std::string>();
    if (result.contains("issue_cwe")) {
      const Json& cwe = result["issue_cwe"];
      if (cwe.is_number_integer()) {
        finding.cwe_id = fmt::format("CWE-{}", cwe.get<long>());
      } else if (cwe.is_object() && cwe.contains("id") && cwe["id"].is_number_integer()) {
        finding.cwe_id = fmt::format("CWE-{}", cwe["id"].get<long>());
      }
    }
    if (result.contains("line_number") && result["line_number"].is_number_integer()) {
      finding.start_line = result["line_number"].get<int>();
    }
    finding.severity = optional_string(result, "issue_severity", "MEDIUM");
    finding.message = optional_string(result, "issue_text", "");
    finding.file = optional_string(result, "filename", "");
    finding.tools = {Tool::bandit};
    findings.push_back(std::move(finding));
    ++index;
  }
  return findings;
}

std::vector<Finding> dedupe_findings(std::vector<Finding> findings) {
  std::map<std::string, Finding> merged;
  for (Finding& finding : findings) {
    if (finding.tools.empty()) finding.tools = {finding.tool};
    const std::string key = finding.fingerprint();
    auto it = merged.find(key);
    if (it == merged.end()) {
      merged.emplace(key, std::move(finding));
    } else {
      Finding& kept = it->second;
      for (Tool t : finding.tools) kept.tools.push_back(t);
    }
  }
  std::vector<Finding> out;
  out.reserve(merged.size());
  for (auto& [key, finding] : merged) {
    std::sort(finding.tools.begin(), finding.tools.end());
    finding.tools.erase(std::unique(finding.tools.begin(), finding.tools.end()),
                        finding.tools.end());
    out.push_back(std::move(finding));
  }
  std::sort(out.begin(), out.end(), [](const Finding& a, const Finding& b) {
    if (a.file != b.file) return a.file < b.file;
    if (a.start_line != b.start_line) return a.start_line < b.start_line;
    return a.fingerprint() < b.fingerprint();
  });
  return out;
}

namespace {

bool is_fence_line(std::string_view line) {
  if (line.size() < 3 || line.substr(0, 3) != "```") return false;
  // allow an optional language tag, nothing else
  for (char c : line.substr(3)) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '+' || c == '-')) {
      return false;
    }
  }
  return true;
}

std::string strip_outer_blank(std::string text) {
  std::size_t begin = 0;
  while (begin < text.size() && (text[begin] == '\n' || text[begin] == '\r')) ++begin;
  std::size_t end = text.size();
  while (end > begin && (text[end - 1] == '\n' || text[end - 1] == '\r' ||
                         text[end - 1] == ' ' || text[end - 1] == '\t')) {
    --end;
  }
  return text.substr(begin, end - begin);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  lines.push_back(current);
  return lines;
}

}  // namespace

bool brackets_balanced(const std::string& code) {
  std::vector<char> stack;
  for (char c : code) {
    switch (c) {
      case '(': case '[': case '{':
        stack.push_back(c);
        break;
      case ')':
        if (stack.empty() || stack.back() != '(') return false;
        stack.pop_back();
        break;
      case ']':
        if (stack.empty() || stack.back() != '[') return false;
        stack.pop_back();
        break;
      case '}':
        if (stack.empty() || stack.back() != '{') return false;
        stack.pop_back();
        break;
      default:
        break;
    }
  }
  return stack.empty();
}

ExtractedCode extract_code(const std::string& text) {
  const std::vector<std::string> lines = split_lines(text);

  // 1) first complete fenced block
  std::optional<std::size_t> fence_open;
  std::optional<std::pair<std::size_t, std::size_t>> block;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (!is_fence_line(lines[i])) continue;
    if (!fence_open) {
      fence_open = i;
    } else {
      block = {*fence_open + 1, i};
      break;
    }
  }
  std::string code;
  if (block) {
    for (std::size_t i = block->first; i < block->second; ++i) {
      code += lines[i];
      code += '\n';
    }
  } else {
    // 2) text after the first response marker
    const std::size_t marker = text.find(kResponseMarker);
    std::string tail;
    if (marker != std::string::npos) {
      tail = text.substr(marker + kResponseMarker.size());
    } else {
      // 3) the whole text
      tail = text;
    }
    for (const std::string& line : split_lines(tail)) {
      if (is_fence_line(line)) continue;  // drop dangling fences
      code += line;
      code += '\n';
    }
  }

  ExtractedCode out;
  out.code = strip_outer_blank(std::move(code));
  bool nonblank = false;
  for (char c : out.code) {
    if (c != ' ' && c != '\t' && c != '\n' && c != '\r') {
      nonblank = true;
      break;
    }
  }
  out.valid = !out.code.empty() && nonblank && brackets_balanced(out.code);
  return out;
}

std::vector<ToyRule> load_toy_rules(const std::filesystem::path& path) {
  std::vector<ToyRule> rules;
  std::size_t line_no = 0;
  for (const Json& row : read_jsonl(path)) {
    ++line_no;
    ToyRule rule;
    rule.rule_id = require_string(row, "rule_id", path, line_no);
    rule.pattern = require_string(row, "pattern", path, line_no);
    rule.cwe_id = require_string(row, "cwe_id", path, line_no);
    rule.severity = optional_string(row, "severity", "MEDIUM");
    rule.message = optional_string(row, "message", "");
    rule.channel = optional_string(row, "channel", "bandit");
    if (rule.pattern.empty()) {
      throw Error(ErrorKind::validation,
                  fmt::format("{}:{}: empty toy rule pattern", path.string(), line_no));
    }
    if (rule.channel != "bandit" && rule.channel != "codeql") {
      throw Error(ErrorKind::validation,
                  fmt::format("{}:{}: channel must be 'bandit' or 'codeql'",
                              path.string(), line_no));
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<Finding> toy_analyze(const std::string& code, const std::string& file_label,
                                 const std::vector<ToyRule>& rules) {
  const std::vector<std::string> lines = split_lines(code);
  std::vector<Finding> findings;
  for (const ToyRule& rule : rules) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].find(rule.pattern) == std::string::npos) continue;
      Finding finding;
      finding.tool = Tool::toy;
      finding.rule_id = rule.rule_id;
      finding.cwe_id = rule.cwe_id;
      finding.file = file_label;
      finding.start_line = static_cast<int>(i + 1);
      finding.severity = rule.severity;
      finding.message = rule.message.empty()
                            ? fmt::format("pattern '{}' present", rule.pattern)
                            : rule.message;
      finding.tools = {Tool::toy};
      findings.push_back(std::move(finding));
    }
  }
  return findings;
}

}  // namespace disco::analyze
