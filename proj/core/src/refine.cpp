#include "disco/refine.hpp"

#include "disco/errors.hpp"

#include <fmt/format.h>

namespace disco::refine {

ParsedRefinement parse_refinement(const std::string& text) {
  static const std::vector<std::string> keys = {"FIX:", "REASON:"};
  std::vector<std::string> sections = distill::parse_sections(text, keys);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    if (sections[k].empty()) {
      throw Error(ErrorKind::validation,
                  fmt::format("empty section for key '{}'", keys[k]));
    }
  }
  ParsedRefinement parsed;
  parsed.fixed_code = std::move(sections[0]);
  parsed.fix_reason = std::move(sections[1]);
  return parsed;
}

std::string render_feedback(const std::vector<analyze::Finding>& findings) {
  if (findings.empty()) return "None";
  std::string out;
  for (std::size_t i = 0; i < findings.size(); ++i) {
    const analyze::Finding& finding = findings[i];
    const std::string key =
        finding.cwe_id ? *finding.cwe_id
                       : fmt::format("{}:{}", analyze::to_string(finding.tool),
                                     finding.rule_id);
    out += fmt::format("- line {}: [{}] {}", finding.start_line, key, finding.message);
    if (i + 1 < findings.size()) out += '\n';
  }
  return out;
}

namespace {

void replace_slot(std::string& text, std::string_view slot, const std::string& value) {
  const std::size_t pos = text.find(slot);
  if (pos != std::string::npos) text.replace(pos, slot.size(), value);
}

}  // namespace

std::string render_refine_prompt(const std::string& template_text,
                                 const std::string& code,
                                 const std::vector<analyze::Finding>& bandit_findings,
                                 const std::vector<analyze::Finding>& codeql_findings) {
  std::string text = template_text;
  replace_slot(text, "[SECURE CODE]", code);
  replace_slot(text, "[FEEDBACK FROM BANDIT SECURITY ANALYZER]",
               render_feedback(bandit_findings));
  replace_slot(text, "[FEEDBACK FROM CODEQL SECURITY ANALYZER]",
               render_feedback(codeql_findings));
  return text;
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
  return row;
}

analyze::Finding finding_from_json(const Json& row) {
  analyze::Finding finding;
  const std::string tool = row.value("tool", "toy");
  finding.tool = tool == "codeql"   ? analyze::Tool::codeql
                 : tool == "bandit" ? analyze::Tool::bandit
                                    : analyze::Tool::toy;
  finding.rule_id = row.value("rule_id", "");
  if (row.contains("cwe_id")) finding.cwe_id = row["cwe_id"].get<std::string>();
  finding.file = row.value("file", "");
  finding.start_line = row.value("start_line", 0);
  finding.severity = row.value("severity", "");
  finding.message = row.value("message", "");
  finding.tools = {finding.tool};
  return finding;
}

}  // namespace

Json refined_to_json(const RefinedRecord& record) {
  Json row = distill::generation_to_json(record.gen);
  row["final_sec_code"] = record.final_sec_code;
  row["refine_rounds"] = record.refine_rounds;
  row["refined"] = record.refined;
  row["still_insecure"] = record.still_insecure;
  row["kept_on_parse_failure"] = record.kept_on_parse_failure;
  Json rounds = Json::array();
  for (const RefinementRound& round : record.rounds) {
    Json bandit = Json::array();
    for (const analyze::Finding& finding : round.bandit_findings) {
      bandit.push_back(finding_to_json(finding));
    }
    Json codeql = Json::array();
    for (const analyze::Finding& finding : round.codeql_findings) {
      codeql.push_back(finding_to_json(finding));
    }
    rounds.push_back(Json{
        {"round_index", round.round_index},
        {"bandit_findings", bandit},
        {"codeql_findings", codeql},
        {"fixed_code", round.fixed_code},
        {"fix_reason", round.fix_reason},
        {"parse_ok", round.parse_ok},
    });
  }
  row["rounds"] = rounds;
  return row;
}

RefinedRecord refined_from_json(const Json& row) {
  RefinedRecord record;
  record.gen = distill::generation_from_json(row);
  record.final_sec_code = row.value("final_sec_code", "");
  record.refine_rounds = row.value("refine_rounds", 0);
  record.refined = row.value("refined", false);
  record.still_insecure = row.value("still_insecure", false);
  record.kept_on_parse_failure = row.value("kept_on_parse_failure", false);
  if (row.contains("rounds")) {
    for (const Json& round_row : row["rounds"]) {
      RefinementRound round;
      round.round_index = round_row.value("round_index", 0);
      if (round_row.contains("bandit_findings")) {
        for (const Json& f : round_row["bandit_findings"]) {
          round.bandit_findings.push_back(finding_from_json(f));
        }
      }
      if (round_row.contains("codeql_findings")) {
        for (const Json& f : round_row["codeql_findings"]) {
          round.codeql_findings.push_back(finding_from_json(f));
        }
      }
      round.fixed_code = round_row.value("fixed_code", "");
      round.fix_reason = round_row.value("fix_reason", "");
      round.parse_ok = round_row.value("parse_ok", true);
      record.rounds.push_back(std::move(round));
    }
  }
  return record;
}

RefinedRecord refine_loop(const distill::GenerationRecord& record,
                          const ChannelAnalyzer& bandit,
                          const ChannelAnalyzer& codeql,
                          const std::string& template_text,
                          llm::TextGenClient& client,
                          const RefineOptions& options) {
  RefinedRecord refined;
  refined.gen = record;
  refined.final_sec_code = record.parsed.sec_code;

  for (int round_index = 1; round_index <= options.max_rounds; ++round_index) {
    const std::vector<analyze::Finding> bandit_findings =
        analyze::dedupe_findings(bandit(refined.final_sec_code, record.id));
    const std::vector<analyze::Finding> codeql_findings =
        analyze::dedupe_findings(codeql(refined.final_sec_code, record.id));
    if (bandit_findings.empty() && codeql_findings.empty()) break;

    llm::CompletionRequest request;
    request.prompt = render_refine_prompt(template_text, refined.final_sec_code,
                                          bandit_findings, codeql_findings);
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    const std::string response = client.complete(request);
    ++refined.refine_rounds;

    RefinementRound round;
    round.round_index = round_index;
    round.bandit_findings = bandit_findings;
    round.codeql_findings = codeql_findings;
    try {
      ParsedRefinement parsed = parse_refinement(response);
      round.fixed_code = parsed.fixed_code;
      round.fix_reason = parsed.fix_reason;
      refined.final_sec_code = parsed.fixed_code;
      refined.rounds.push_back(std::move(round));
    } catch (const Error&) {
      round.parse_ok = false;
      refined.kept_on_parse_failure = true;
      refined.rounds.push_back(std::move(round));
      break;  // keep the pre-round code
    }
  }

  refined.refined = refined.final_sec_code != record.parsed.sec_code;
  refined.still_insecure =
      !analyze::dedupe_findings(bandit(refined.final_sec_code, record.id)).empty() ||
      !analyze::dedupe_findings(codeql(refined.final_sec_code, record.id)).empty();
  return refined;
}

}  // namespace disco::refine
