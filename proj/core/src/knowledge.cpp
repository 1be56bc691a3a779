#include "disco/knowledge.hpp"

#include "disco/errors.hpp"
#include "disco/rng.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <set>

namespace disco::knowledge {

const char* to_string(TemplateKind kind) noexcept {
  return kind == TemplateKind::issue_only ? "issue" : "issue_package";
}

std::vector<SecurityIssueRecord> load_knowledge_base(const std::filesystem::path& path) {
  std::vector<SecurityIssueRecord> records;
  std::set<std::pair<std::string, std::string>> seen;
  std::size_t line_no = 0;
  for (const Json& row : read_jsonl(path)) {
    ++line_no;
    SecurityIssueRecord record;
    record.cwe_id = require_string(row, "cwe_id", path, line_no);
    record.issue_title = require_string(row, "issue_title", path, line_no);
    record.description = require_string(row, "description", path, line_no);
    record.source = require_string(row, "source", path, line_no);
    if (record.cwe_id.empty() || record.issue_title.empty() ||
        record.description.empty() || record.source.empty()) {
      throw Error(ErrorKind::validation,
                  fmt::format("{}:{}: empty field in knowledge base record",
                              path.string(), line_no));
    }
    if (!seen.insert({record.cwe_id, record.issue_title}).second) {
      throw Error(ErrorKind::validation,
                  fmt::format("{}:{}: duplicate issue ({}, {})", path.string(), line_no,
                              record.cwe_id, record.issue_title));
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<PackageRecord> load_packages(const std::filesystem::path& path) {
  std::vector<PackageRecord> records;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const Json& row : read_jsonl(path)) {
    ++line_no;
    PackageRecord record;
    record.name = require_string(row, "name", path, line_no);
    record.domain = optional_string(row, "domain", "");
    if (record.name.empty()) {
      throw Error(ErrorKind::validation,
                  fmt::format("{}:{}: empty package name", path.string(), line_no));
    }
    if (!seen.insert(record.name).second) {
      throw Error(ErrorKind::validation,
                  fmt::format("{}:{}: duplicate package '{}'", path.string(), line_no,
                              record.name));
    }
    records.push_back(std::move(record));
  }
  return records;
}

namespace {

void replace_all(std::string& text, std::string_view slot, std::string_view value) {
  std::size_t pos = 0;
  while ((pos = text.find(slot, pos)) != std::string::npos) {
    text.replace(pos, slot.size(), value);
    pos += value.size();
  }
}

}  // namespace

std::string render_generation_prompt(const std::string& template_text,
                                     const SecurityIssueRecord& issue,
                                     const std::optional<PackageRecord>& package) {
  std::string text = template_text;
  replace_all(text, "[ISSUE]", issue.issue_title);
  replace_all(text, "[DESCRIPTION]", issue.description);
  if (package) {
    replace_all(text, "[PACKAGE]", package->name);
  } else {
    replace_all(text, "[PACKAGE] ", "");
    replace_all(text, "[PACKAGE]", "");
  }
  return text;
}

std::vector<PromptRecord> generate_prompts(const std::vector<SecurityIssueRecord>& issues,
                                           const std::vector<PackageRecord>& packages,
                                           const std::string& template_text,
                                           std::size_t target_count,
                                           std::uint64_t seed) {
  if (issues.empty()) {
    throw Error(ErrorKind::validation, "prompt generation needs at least one issue");
  }
  const std::size_t capacity = issues.size() + issues.size() * packages.size();
  if (target_count > capacity) {
    throw Error(ErrorKind::capacity,
                fmt::format("target_count {} exceeds capacity {} ({} issues x {} packages)",
                            target_count, capacity, issues.size(), packages.size()));
  }
  if (target_count < issues.size()) {
    throw Error(ErrorKind::validation,
                fmt::format("target_count {} below issue count {}; every issue gets an "
                            "issue-only prompt",
                            target_count, issues.size()));
  }

  // Canonical order before any sampling: issues by (cwe_id, issue_title),
  // then the cross product additionally by package name.
  std::vector<std::size_t> issue_order(issues.size());
  for (std::size_t i = 0; i < issue_order.size(); ++i) issue_order[i] = i;
  std::sort(issue_order.begin(), issue_order.end(), [&](std::size_t a, std::size_t b) {
    const auto key_a = std::tie(issues[a].cwe_id, issues[a].issue_title);
    const auto key_b = std::tie(issues[b].cwe_id, issues[b].issue_title);
    return key_a < key_b;
  });
  std::vector<std::size_t> package_order(packages.size());
  for (std::size_t i = 0; i < package_order.size(); ++i) package_order[i] = i;
  std::sort(package_order.begin(), package_order.end(), [&](std::size_t a, std::size_t b) {
    return packages[a].name < packages[b].name;
  });

  std::vector<PromptRecord> prompts;
  prompts.reserve(target_count);
  for (std::size_t idx : issue_order) {
    PromptRecord prompt;
    prompt.kind = TemplateKind::issue_only;
    prompt.issue = issues[idx];
    prompt.rendered_text = render_generation_prompt(template_text, issues[idx], std::nullopt);
    prompts.push_back(std::move(prompt));
  }

  const std::size_t combos_needed = target_count - issues.size();
  if (combos_needed > 0) {
    // Cross product in canonical order; partial Fisher-Yates draws
    // combos_needed distinct entries.
    std::vector<std::pair<std::size_t, std::size_t>> pool;
    pool.reserve(issues.size() * packages.size());
    for (std::size_t i : issue_order) {
      for (std::size_t p : package_order) pool.emplace_back(i, p);
    }
    Rng rng(seed);
    for (std::size_t i = 0; i < combos_needed; ++i) {
      const std::size_t j = i + rng.bounded(pool.size() - i);
      std::swap(pool[i], pool[j]);
      PromptRecord prompt;
      prompt.kind = TemplateKind::issue_package;
      prompt.issue = issues[pool[i].first];
      prompt.package = packages[pool[i].second];
      prompt.rendered_text =
          render_generation_prompt(template_text, prompt.issue, prompt.package);
      prompts.push_back(std::move(prompt));
    }
  }
  return prompts;
}

Json prompt_to_json(const PromptRecord& prompt) {
  Json row{
      {"template_kind", to_string(prompt.kind)},
      {"cwe_id", prompt.issue.cwe_id},
      {"issue_title", prompt.issue.issue_title},
      {"description", prompt.issue.description},
      {"source", prompt.issue.source},
      {"rendered_text", prompt.rendered_text},
  };
  if (prompt.package) {
    row["package_name"] = prompt.package->name;
    row["package_domain"] = prompt.package->domain;
  }
  return row;
}

PromptRecord prompt_from_json(const Json& row) {
  PromptRecord prompt;
  const std::string kind = row.value("template_kind", "issue");
  prompt.kind = kind == "issue_package" ? TemplateKind::issue_package
                                        : TemplateKind::issue_only;
  prompt.issue.cwe_id = row.value("cwe_id", "");
  prompt.issue.issue_title = row.value("issue_title", "");
  prompt.issue.description = row.value("description", "");
  prompt.issue.source = row.value("source", "");
  if (row.contains("package_name")) {
    PackageRecord package;
    package.name = row["package_name"].get<std::string>();
    package.domain = row.value("package_domain", "");
    prompt.package = package;
  }
  prompt.rendered_text = row.value("rendered_text", "");
  return prompt;
}

}  // namespace disco::knowledge
