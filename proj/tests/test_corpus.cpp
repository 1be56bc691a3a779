#include "disco/corpus.hpp"
#include "disco/errors.hpp"

#include <doctest.h>

#include <numeric>
#include <set>
#include <string>
#include <vector>

#include "test_util.hpp"

using disco::Error;
namespace corpus = disco::corpus;
namespace refine = disco::refine;

namespace {

const char* kReasoningTemplate =
    "The code may have the vulnerability [CWE-ID]: [ISSUE]. [DESCRIPTION]. "
    "Secure because [$r^{+}$]. Vulnerable because [$r^{-}$].";

refine::RefinedRecord make_refined(const std::string& id, const std::string& cwe,
                                   const std::string& sec_code, bool still_insecure) {
  refine::RefinedRecord record;
  record.gen.id = id;
  record.gen.prompt.issue = {cwe, "issue title", "a description", "test"};
  record.gen.parsed.vul_code = "v = bad(a)";
  record.gen.parsed.reason_vul = "calls bad";
  record.gen.parsed.sec_code = "v = unrefined(a)";
  record.gen.parsed.reason_sec = "calls good";
  record.gen.parsed.instruction = "do the thing";
  record.final_sec_code = sec_code;
  record.refined = sec_code != record.gen.parsed.sec_code;
  record.refine_rounds = record.refined ? 1 : 0;
  record.still_insecure = still_insecure;
  return record;
}

}  // namespace

TEST_CASE("reasoning template renders r+ before r-") {
  const std::string text = corpus::render_reasoning(
      kReasoningTemplate, "CWE-78", "command injection", "shell from input",
      "uses a list", "builds a string");
  CHECK(text ==
        "The code may have the vulnerability CWE-78: command injection. shell "
        "from input. Secure because uses a list. Vulnerable because builds a "
        "string.");
}

TEST_CASE("corpus building keeps refined code and flags leftovers") {
  const std::vector<refine::RefinedRecord> records = {
      make_refined("gen-000000", "CWE-78", "v = good(a)", false),
      make_refined("gen-000001", "CWE-94", "v = unrefined(a)", true),
  };
  const auto instances = corpus::build_corpus(records, kReasoningTemplate, false);
  REQUIRE(instances.size() == 2);
  CHECK(instances[0].id == "gen-000000");
  CHECK(instances[0].y_plus == "v = good(a)");
  CHECK(instances[0].y_minus == "v = bad(a)");
  CHECK(instances[0].x == "do the thing");
  CHECK(instances[0].refined);
  CHECK(!instances[0].still_insecure);
  CHECK(instances[0].reasoning.find("CWE-78") != std::string::npos);
  CHECK(instances[1].still_insecure);

  const auto dropped = corpus::build_corpus(records, kReasoningTemplate, true);
  REQUIRE(dropped.size() == 1);
  CHECK(dropped[0].id == "gen-000000");
}

TEST_CASE("instances round trip through jsonl files") {
  testutil::TempDir tmp;
  const auto instances = corpus::build_corpus(
      {make_refined("gen-000000", "CWE-78", "v = good(a)", false)},
      kReasoningTemplate, false);
  corpus::save_instances(tmp.file("corpus.jsonl"), instances);
  const auto back = corpus::load_instances(tmp.file("corpus.jsonl"));
  REQUIRE(back.size() == 1);
  CHECK(back[0].id == instances[0].id);
  CHECK(back[0].x == instances[0].x);
  CHECK(back[0].y_plus == instances[0].y_plus);
  CHECK(back[0].y_minus == instances[0].y_minus);
  CHECK(back[0].r_plus == instances[0].r_plus);
  CHECK(back[0].r_minus == instances[0].r_minus);
  CHECK(back[0].reasoning == instances[0].reasoning);
  CHECK(back[0].cwe_id == instances[0].cwe_id);
  CHECK(back[0].refined == instances[0].refined);
  CHECK(back[0].still_insecure == instances[0].still_insecure);
}

TEST_CASE("split sizes follow largest-remainder rounding") {
  const auto split = corpus::split_indices(10, {0.5, 0.25, 0.25}, 1);
  CHECK(split.train.size() == 5);
  CHECK(split.validation.size() == 3);  // remainders 0, .5, .5 -> earlier wins
  CHECK(split.test.size() == 2);

  const auto tiny = corpus::split_indices(1, {0.34, 0.33, 0.33}, 1);
  CHECK(tiny.train.size() == 1);
  CHECK(tiny.validation.empty());
  CHECK(tiny.test.empty());
}

TEST_CASE("split is a seeded permutation covering every index once") {
  const auto split = corpus::split_indices(100, {0.8, 0.1, 0.1}, 42);
  std::vector<std::size_t> all;
  all.insert(all.end(), split.train.begin(), split.train.end());
  all.insert(all.end(), split.validation.begin(), split.validation.end());
  all.insert(all.end(), split.test.begin(), split.test.end());
  REQUIRE(all.size() == 100);
  std::set<std::size_t> unique(all.begin(), all.end());
  CHECK(unique.size() == 100);
  CHECK(*unique.begin() == 0);
  CHECK(*unique.rbegin() == 99);

  const auto same = corpus::split_indices(100, {0.8, 0.1, 0.1}, 42);
  CHECK(same.train == split.train);
  const auto other = corpus::split_indices(100, {0.8, 0.1, 0.1}, 43);
  CHECK(other.train != split.train);
}

TEST_CASE("bad proportions are rejected") {
  CHECK_THROWS_AS(corpus::split_indices(10, {0.5, 0.4, 0.2}, 1), Error);
  CHECK_THROWS_AS(corpus::split_indices(10, {-0.1, 0.6, 0.5}, 1), Error);
}

TEST_CASE("levenshtein and line counting match hand-computed values") {
  CHECK(corpus::levenshtein("", "") == 0);
  CHECK(corpus::levenshtein("abc", "") == 3);
  CHECK(corpus::levenshtein("kitten", "sitting") == 3);
  CHECK(corpus::levenshtein("flaw", "lawn") == 2);
  CHECK(corpus::count_nonblank_lines("a\n\n  \nb\n") == 2);
  CHECK(corpus::count_nonblank_lines("") == 0);
  CHECK(corpus::count_nonblank_lines("x") == 1);
}

TEST_CASE("dataset stats aggregate the security-relevant fields") {
  const auto instances = corpus::build_corpus(
      {
          make_refined("gen-000000", "CWE-78", "v = good(a)", false),
          make_refined("gen-000001", "CWE-94", "v = unrefined(a)", true),
          make_refined("gen-000002", "CWE-78", "v = bad(a)", false),
      },
      kReasoningTemplate, false);
  const auto stats = corpus::dataset_stats(instances);
  CHECK(stats.count == 3);
  CHECK(stats.distinct_cwes == 2);
  CHECK(stats.pct_still_insecure == doctest::Approx(100.0 / 3.0));
  CHECK(stats.mean_loc_minus == doctest::Approx(1.0));
  CHECK(stats.mean_loc_plus == doctest::Approx(1.0));
  // gen-000002's y+ equals its y-: char diff 0; the others differ
  CHECK(stats.mean_char_diff ==
        doctest::Approx((corpus::levenshtein("v = good(a)", "v = bad(a)") +
                         corpus::levenshtein("v = unrefined(a)", "v = bad(a)") + 0) /
                        3.0));
  const disco::Json doc = corpus::stats_to_json(stats);
  CHECK(doc["count"] == 3);
  CHECK(doc.contains("mean_pct_masked_minus"));
}

TEST_CASE("ood filter separates held-out CWEs") {
  const auto instances = corpus::build_corpus(
      {
          make_refined("gen-000000", "CWE-78", "v = good(a)", false),
          make_refined("gen-000001", "CWE-94", "v = good(a)", false),
          make_refined("gen-000002", "CWE-502", "v = good(a)", false),
      },
      kReasoningTemplate, false);
  const auto split = corpus::ood_filter(instances, {"CWE-94", "CWE-502"});
  REQUIRE(split.in_distribution.size() == 1);
  CHECK(split.in_distribution[0].cwe_id == "CWE-78");
  CHECK(split.held_out.size() == 2);
}

TEST_CASE("reference split proportions sum to one") {
  const auto proportions = corpus::reference_split_proportions();
  CHECK(proportions[0] + proportions[1] + proportions[2] == doctest::Approx(1.0));
  CHECK(proportions[0] > proportions[1]);
  CHECK(proportions[1] > proportions[2]);
}
