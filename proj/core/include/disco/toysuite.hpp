#pragma once

#include "disco/analyze.hpp"
#include "disco/knowledge.hpp"
#include "disco/llm_client.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace disco::toy {

// A self-contained synthetic world small enough that the built-in policy
// model can learn it end to end: six vulnerability families, each with a
// fixed insecure/secure call pair inside a three-line helper, plus string
// rules that flag the insecure calls. Every fixture under fixtures/toy and
// fixtures/refine_demo is generated from here, so regenerating them is a
// byte-for-byte no-op.
struct Family {
  std::string cwe_id;
  std::string issue_title;
  std::string description;
  std::string insecure_line;  // e.g. "    v = shell_run(a)"
  std::string secure_line;
  std::string reason_vul;
  std::string reason_sec;
  std::string action;  // instruction verb phrase
};

const std::vector<Family>& families();

std::size_t family_index_for_cwe(const std::string& cwe_id);

std::vector<knowledge::SecurityIssueRecord> make_kb();
std::vector<knowledge::PackageRecord> make_packages();
std::vector<analyze::ToyRule> make_rules();

// Prompt count / sampling seed used for the recorded distillation cassette.
inline constexpr std::size_t kPromptCount = 240;
inline constexpr std::uint64_t kPromptSeed = 7;

// Every third synthesized generation carries an extra insecure line in BOTH
// code bodies, imitating a distiller whose "secure" answer is still flawed.
bool contaminated(std::size_t prompt_index);

// An extra insecure call from another family; it trips the analyzers but is
// common to both sides, so alignment masks stay neutral on it.
std::string contamination_line(std::size_t family);

std::string instruction_text(std::size_t family, const std::optional<std::string>& package);
std::string vul_code(std::size_t family, bool with_contamination);
std::string sec_code(std::size_t family, bool with_contamination);

// The raw distiller reply for one prompt (fenced code on even indices).
std::string generation_response(std::size_t family, const std::string& instruction,
                                bool with_contamination, bool fenced);

struct SuiteFiles {
  std::filesystem::path kb;
  std::filesystem::path packages;
  std::filesystem::path rules;
  std::filesystem::path generation_cassette;
  std::filesystem::path refinement_cassette;
  std::filesystem::path demo_generations;
  std::filesystem::path demo_cassette;
};

SuiteFiles suite_files(const std::filesystem::path& fixtures_dir);

// Writes the whole suite under <fixtures_dir>/toy and
// <fixtures_dir>/refine_demo. Needs the two prompt templates because cassette
// keys are the exact rendered request texts the pipeline will produce.
void write_suite(const std::filesystem::path& fixtures_dir,
                 const std::string& generation_template,
                 const std::string& refine_template);

}  // namespace disco::toy
