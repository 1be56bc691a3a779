#include "disco/toysuite.hpp"

#include "disco/errors.hpp"
#include "disco/refine.hpp"

#include <fmt/format.h>

#include <filesystem>

namespace disco::toy {

namespace {

constexpr std::string_view kTimestamp = "2025-11-02T12:00:00Z";

}  // namespace

const std::vector<Family>& families() {
  static const std::vector<Family> kFamilies = {
      {"CWE-78", "command injection", "untrusted input reaches the shell",
       "    v = shell_run(a)", "    v = safe_spawn(a)",
       "builds a shell string from input", "uses safe_spawn with an argument list",
       "run the ping command for a host"},
      {"CWE-94", "code injection", "input is evaluated as code",
       "    v = eval_text(a)", "    v = parse_expr(a)", "evaluates raw input",
       "parses the formula with parse_expr", "apply a user formula to a value"},
      {"CWE-327", "weak hash", "a broken digest protects data",
       "    v = md5_digest(a)", "    v = sha_digest(a)", "hashes with md5_digest",
       "hashes with sha_digest", "fingerprint an uploaded file"},
      {"CWE-295", "missing TLS verification", "server certificates are not checked",
       "    v = fetch(a, verify=False)", "    v = fetch(a, verify=True)",
       "calls fetch with verify=False", "keeps verify=True on fetch",
       "download a status page"},
      {"CWE-502", "unsafe deserialization", "pickled input is loaded directly",
       "    v = load_pickle(a)", "    v = load_json(a)",
       "loads input with load_pickle", "reads the input with load_json",
       "restore a saved session object"},
      {"CWE-377", "insecure temp file", "a fixed /tmp path is reused",
       "    v = save(a, \"/tmp/cache\")", "    v = save(a, mktemp())",
       "writes to a fixed /tmp path", "writes through mktemp",
       "stage an upload for later"},
  };
  return kFamilies;
}

std::size_t family_index_for_cwe(const std::string& cwe_id) {
  const std::vector<Family>& all = families();
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all[i].cwe_id == cwe_id) return i;
  }
  throw Error(ErrorKind::validation, fmt::format("no toy family for '{}'", cwe_id));
}

std::vector<knowledge::SecurityIssueRecord> make_kb() {
  std::vector<knowledge::SecurityIssueRecord> kb;
  for (const Family& family : families()) {
    kb.push_back({family.cwe_id, family.issue_title, family.description, "toy"});
  }
  return kb;
}

std::vector<knowledge::PackageRecord> make_packages() {
  static const std::vector<std::pair<const char*, const char*>> kPackages = {
      {"acmeio", "file transfer"},   {"quickdb", "storage"},
      {"fastlog", "logging"},        {"webflux", "http services"},
      {"dataforge", "etl"},          {"netkit", "networking"},
      {"cloudbus", "messaging"},     {"filesync", "file transfer"},
      {"authcore", "auth"},          {"jobqueue", "scheduling"},
      {"mailgate", "email"},         {"cachebox", "caching"},
      {"geoquery", "geo"},           {"imgproc", "imaging"},
      {"textmill", "text"},          {"statline", "metrics"},
      {"keyvault", "secrets"},       {"streampipe", "streaming"},
      {"formval", "validation"},     {"tasknest", "scheduling"},
      {"bluewire", "networking"},    {"sqlbridge", "storage"},
      {"restmint", "http services"}, {"pdfsmith", "documents"},
      {"csvtap", "etl"},             {"cronmate", "scheduling"},
      {"hostscan", "networking"},    {"linkcrawl", "crawling"},
      {"notifyhub", "messaging"},    {"metricfan", "metrics"},
      {"sessionjar", "auth"},        {"tokenmill", "auth"},
      {"auditpen", "logging"},       {"backupzen", "storage"},
      {"configly", "configuration"}, {"deploybot", "automation"},
      {"logsieve", "logging"},       {"parsecraft", "text"},
      {"queuecap", "messaging"},     {"shellmate", "automation"},
  };
  std::vector<knowledge::PackageRecord> packages;
  packages.reserve(kPackages.size());
  for (const auto& [name, domain] : kPackages) packages.push_back({name, domain});
  return packages;
}

std::vector<analyze::ToyRule> make_rules() {
  return {
      {"TOY101", "shell_run(", "CWE-78", "high", "shell command built from input",
       "bandit"},
      {"TOY102", "eval_text(", "CWE-94", "high", "input evaluated as code", "codeql"},
      {"TOY103", "md5_digest(", "CWE-327", "medium", "weak digest in use", "bandit"},
      {"TOY104", "verify=False", "CWE-295", "high", "certificate verification disabled",
       "codeql"},
      {"TOY105", "load_pickle(", "CWE-502", "high", "untrusted pickle loaded", "bandit"},
      {"TOY106", "\"/tmp/", "CWE-377", "medium", "fixed temporary path", "codeql"},
  };
}

bool contaminated(std::size_t prompt_index) { return prompt_index % 3 == 1; }

std::string contamination_line(std::size_t family) {
  // Borrow another family's insecure call so the extra line is always
  // flaggable; the md5 family borrows from the shell family.
  return family == 2 ? families()[0].insecure_line : families()[2].insecure_line;
}

std::string instruction_text(std::size_t family,
                             const std::optional<std::string>& package) {
  const Family& f = families().at(family);
  if (package) {
    return fmt::format("Use the {} package to {}.", *package, f.action);
  }
  return fmt::format("Write a small helper to {}.", f.action);
}

namespace {

std::string code_body(std::size_t family, const std::string& call_line,
                      bool with_contamination) {
  std::string code = "def step(a):\n";
  code += call_line;
  code += '\n';
  if (with_contamination) {
    code += contamination_line(family);
    code += '\n';
  }
  code += "    return emit(v)";
  return code;
}

}  // namespace

std::string vul_code(std::size_t family, bool with_contamination) {
  return code_body(family, families().at(family).insecure_line, with_contamination);
}

std::string sec_code(std::size_t family, bool with_contamination) {
  return code_body(family, families().at(family).secure_line, with_contamination);
}

std::string generation_response(std::size_t family, const std::string& instruction,
                                bool with_contamination, bool fenced) {
  const Family& f = families().at(family);
  const std::string vul = vul_code(family, with_contamination);
  const std::string sec = sec_code(family, with_contamination);
  if (fenced) {
    return fmt::format(
        "VUL:\n```python\n{}\n```\nREASON: {}\nSEC:\n```python\n{}\n```\n"
        "REASON: {}\nINST: {}\n",
        vul, f.reason_vul, sec, f.reason_sec, instruction);
  }
  return fmt::format("VUL:\n{}\nREASON: {}\nSEC:\n{}\nREASON: {}\nINST: {}\n", vul,
                     f.reason_vul, sec, f.reason_sec, instruction);
}

SuiteFiles suite_files(const std::filesystem::path& fixtures_dir) {
  SuiteFiles files;
  files.kb = fixtures_dir / "toy" / "toy_kb.jsonl";
  files.packages = fixtures_dir / "toy" / "toy_packages.jsonl";
  files.rules = fixtures_dir / "toy" / "toy_rules.jsonl";
  files.generation_cassette = fixtures_dir / "toy" / "generation_cassette.jsonl";
  files.refinement_cassette = fixtures_dir / "toy" / "refinement_cassette.jsonl";
  files.demo_generations = fixtures_dir / "refine_demo" / "generations.jsonl";
  files.demo_cassette = fixtures_dir / "refine_demo" / "cassette.jsonl";
  return files;
}

namespace {

// The refinement exchange for one flawed secure body. The request must match
// what refine_loop will render, so it goes through the same analyzer +
// renderer path. `kind` 0 repairs, 1 returns the code unchanged, 2 is a
// reply the parser rejects.
llm::TranscriptEntry refinement_entry(const std::string& refine_template,
                                      std::size_t family, int kind, bool fence_fix) {
  const std::vector<analyze::ToyRule> rules = make_rules();
  std::vector<analyze::ToyRule> bandit_rules;
  std::vector<analyze::ToyRule> codeql_rules;
  for (const analyze::ToyRule& rule : rules) {
    (rule.channel == "bandit" ? bandit_rules : codeql_rules).push_back(rule);
  }
  const std::string flawed = sec_code(family, true);
  const std::vector<analyze::Finding> bandit_findings =
      analyze::dedupe_findings(analyze::toy_analyze(flawed, "toy", bandit_rules));
  const std::vector<analyze::Finding> codeql_findings =
      analyze::dedupe_findings(analyze::toy_analyze(flawed, "toy", codeql_rules));

  llm::TranscriptEntry entry;
  entry.request_text = refine::render_refine_prompt(refine_template, flawed,
                                                    bandit_findings, codeql_findings);
  entry.timestamp = std::string(kTimestamp);
  entry.model_label = "toy-refiner";
  switch (kind) {
    case 0: {
      const std::string fixed = sec_code(family, false);
      entry.response_text =
          fence_fix
              ? fmt::format("FIX:\n```python\n{}\n```\nREASON: removed the flagged call\n",
                            fixed)
              : fmt::format("FIX:\n{}\nREASON: removed the flagged call\n", fixed);
      break;
    }
    case 1:
      entry.response_text = fmt::format(
          "FIX:\n{}\nREASON: the flagged call is required here\n", flawed);
      break;
    default:
      entry.response_text = "I cannot change this code.\n";
      break;
  }
  return entry;
}

}  // namespace

void write_suite(const std::filesystem::path& fixtures_dir,
                 const std::string& generation_template,
                 const std::string& refine_template) {
  const SuiteFiles files = suite_files(fixtures_dir);
  std::filesystem::create_directories(files.kb.parent_path());
  std::filesystem::create_directories(files.demo_generations.parent_path());

  const std::vector<knowledge::SecurityIssueRecord> kb = make_kb();
  std::vector<Json> rows;
  for (const knowledge::SecurityIssueRecord& record : kb) {
    rows.push_back({{"cwe_id", record.cwe_id},
                    {"issue_title", record.issue_title},
                    {"description", record.description},
                    {"source", record.source}});
  }
  write_jsonl(files.kb, rows);

  rows.clear();
  for (const knowledge::PackageRecord& package : make_packages()) {
    rows.push_back({{"name", package.name}, {"domain", package.domain}});
  }
  write_jsonl(files.packages, rows);

  rows.clear();
  for (const analyze::ToyRule& rule : make_rules()) {
    rows.push_back({{"rule_id", rule.rule_id},
                    {"pattern", rule.pattern},
                    {"cwe_id", rule.cwe_id},
                    {"severity", rule.severity},
                    {"message", rule.message},
                    {"channel", rule.channel}});
  }
  write_jsonl(files.rules, rows);

  // Distillation cassette: one reply per generated prompt, in prompt order.
  const std::vector<knowledge::PromptRecord> prompts = knowledge::generate_prompts(
      kb, make_packages(), generation_template, kPromptCount, kPromptSeed);
  rows.clear();
  std::vector<std::size_t> flawed_families;  // in prompt order
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    const knowledge::PromptRecord& prompt = prompts[i];
    const std::size_t family = family_index_for_cwe(prompt.issue.cwe_id);
    const bool dirty = contaminated(i);
    if (dirty) flawed_families.push_back(family);
    std::optional<std::string> package;
    if (prompt.package) package = prompt.package->name;
    llm::TranscriptEntry entry;
    entry.request_text = prompt.rendered_text;
    entry.response_text = generation_response(
        family, instruction_text(family, package), dirty, i % 2 == 0);
    entry.timestamp = std::string(kTimestamp);
    entry.model_label = "toy-distiller";
    rows.push_back(llm::transcript_to_json(entry));
  }
  write_jsonl(files.generation_cassette, rows);

  // Refinement cassette: per flawed record, 6-in-10 repaired, 3-in-10
  // unchanged, 1-in-10 unparseable.
  rows.clear();
  for (std::size_t c = 0; c < flawed_families.size(); ++c) {
    const int kind = c % 10 < 6 ? 0 : c % 10 < 9 ? 1 : 2;
    rows.push_back(llm::transcript_to_json(
        refinement_entry(refine_template, flawed_families[c], kind, c % 2 == 0)));
  }
  write_jsonl(files.refinement_cassette, rows);

  // Standalone refinement demo: 100 parsed generations, the first 37 flawed;
  // replies repair 25, leave 10 unchanged, and fail to parse on 2.
  rows.clear();
  std::vector<Json> demo_replies;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t family = i % families().size();
    const bool dirty = i < 37;
    distill::GenerationRecord record;
    record.id = fmt::format("gen-{:06d}", i);
    record.prompt.kind = knowledge::TemplateKind::issue_only;
    record.prompt.issue = kb[family];
    record.prompt.rendered_text =
        knowledge::render_generation_prompt(generation_template, kb[family], std::nullopt);
    record.parsed.instruction = instruction_text(family, std::nullopt);
    record.parsed.vul_code = vul_code(family, dirty);
    record.parsed.reason_vul = families()[family].reason_vul;
    record.parsed.sec_code = sec_code(family, dirty);
    record.parsed.reason_sec = families()[family].reason_sec;
    record.raw_text = generation_response(family, record.parsed.instruction, dirty,
                                          i % 2 == 0);
    rows.push_back(distill::generation_to_json(record));
    if (dirty) {
      const int kind = i < 25 ? 0 : i < 35 ? 1 : 2;
      demo_replies.push_back(llm::transcript_to_json(
          refinement_entry(refine_template, family, kind, i % 2 == 0)));
    }
  }
  write_jsonl(files.demo_generations, rows);
  write_jsonl(files.demo_cassette, demo_replies);
}

}  // namespace disco::toy
