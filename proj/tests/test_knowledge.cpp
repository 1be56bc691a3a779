#include "disco/errors.hpp"
#include "disco/knowledge.hpp"

#include <doctest.h>

#include <set>

#include "test_util.hpp"

using disco::Error;
using disco::ErrorKind;
namespace knowledge = disco::knowledge;

namespace {

const char* kTemplate =
    "Issue: [ISSUE]\nDetail: [DESCRIPTION]\n[PACKAGE] Write the code.\n";

}  // namespace

TEST_CASE("knowledge base fixture loads with every field populated") {
  const auto issues =
      knowledge::load_knowledge_base(testutil::fixture_path("knowledge/kb_sample.jsonl"));
  CHECK(issues.size() == 24);
  std::set<std::string> cwes;
  for (const auto& issue : issues) {
    CHECK(!issue.cwe_id.empty());
    CHECK(!issue.issue_title.empty());
    CHECK(!issue.description.empty());
    CHECK(!issue.source.empty());
    cwes.insert(issue.cwe_id);
  }
  CHECK(cwes.size() == issues.size());  // sample has no repeated CWE

  const auto packages =
      knowledge::load_packages(testutil::fixture_path("knowledge/packages.jsonl"));
  CHECK(packages.size() == 10);
}

TEST_CASE("duplicate and malformed knowledge entries are rejected") {
  testutil::TempDir tmp;
  disco::write_text_file(
      tmp.file("dup.jsonl"),
      "{\"cwe_id\":\"CWE-1\",\"issue_title\":\"t\",\"description\":\"d\",\"source\":\"s\"}\n"
      "{\"cwe_id\":\"CWE-1\",\"issue_title\":\"t\",\"description\":\"other\",\"source\":\"s\"}\n");
  CHECK_THROWS_AS(knowledge::load_knowledge_base(tmp.file("dup.jsonl")), Error);

  disco::write_text_file(tmp.file("missing.jsonl"),
                         "{\"cwe_id\":\"CWE-2\",\"issue_title\":\"t\"}\n");
  try {
    knowledge::load_knowledge_base(tmp.file("missing.jsonl"));
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find(":1") != std::string::npos);
  }
}

TEST_CASE("package slot vanishes cleanly for issue-only prompts") {
  knowledge::SecurityIssueRecord issue{"CWE-89", "SQL injection", "queries from strings",
                                       "test"};
  const std::string with_package = knowledge::render_generation_prompt(
      kTemplate, issue, knowledge::PackageRecord{"sqlalchemy", "database toolkits"});
  CHECK(with_package.find("sqlalchemy") != std::string::npos);

  const std::string without = knowledge::render_generation_prompt(kTemplate, issue, {});
  CHECK(without.find("[PACKAGE]") == std::string::npos);
  CHECK(without.find("\nWrite the code.") != std::string::npos);  // no stray space
  CHECK(without.find("SQL injection") != std::string::npos);
  CHECK(without.find("queries from strings") != std::string::npos);
}

TEST_CASE("prompt generation is deterministic and hits the target count") {
  const auto issues =
      knowledge::load_knowledge_base(testutil::fixture_path("knowledge/kb_sample.jsonl"));
  const auto packages =
      knowledge::load_packages(testutil::fixture_path("knowledge/packages.jsonl"));

  const auto a = knowledge::generate_prompts(issues, packages, kTemplate, 100, 7);
  const auto b = knowledge::generate_prompts(issues, packages, kTemplate, 100, 7);
  REQUIRE(a.size() == 100);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].rendered_text == b[i].rendered_text);
    CHECK(knowledge::prompt_to_json(a[i]) == knowledge::prompt_to_json(b[i]));
  }

  // one issue-only prompt per issue, then issue x package samples
  for (std::size_t i = 0; i < issues.size(); ++i) {
    CHECK(a[i].kind == knowledge::TemplateKind::issue_only);
    CHECK(!a[i].package.has_value());
  }
  std::set<std::string> seen;
  for (std::size_t i = issues.size(); i < a.size(); ++i) {
    REQUIRE(a[i].package.has_value());
    const std::string key = a[i].issue.cwe_id + "|" + a[i].package->name;
    CHECK(seen.insert(key).second);  // sampling without replacement
  }

  const auto c = knowledge::generate_prompts(issues, packages, kTemplate, 100, 8);
  bool any_difference = false;
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (c[i].rendered_text != a[i].rendered_text) any_difference = true;
  }
  CHECK(any_difference);
}

TEST_CASE("prompt counts beyond the cross product raise a capacity error") {
  const auto issues =
      knowledge::load_knowledge_base(testutil::fixture_path("knowledge/kb_sample.jsonl"));
  const auto packages =
      knowledge::load_packages(testutil::fixture_path("knowledge/packages.jsonl"));
  const std::size_t limit = issues.size() + issues.size() * packages.size();
  CHECK(knowledge::generate_prompts(issues, packages, kTemplate, limit, 1).size() ==
        limit);
  try {
    knowledge::generate_prompts(issues, packages, kTemplate, limit + 1, 1);
    FAIL("expected a capacity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::capacity);
  }
}

TEST_CASE("prompt json round trip") {
  const auto issues =
      knowledge::load_knowledge_base(testutil::fixture_path("knowledge/kb_sample.jsonl"));
  const auto packages =
      knowledge::load_packages(testutil::fixture_path("knowledge/packages.jsonl"));
  const auto prompts = knowledge::generate_prompts(issues, packages, kTemplate, 30, 3);
  for (const auto& prompt : prompts) {
    const auto round = knowledge::prompt_from_json(knowledge::prompt_to_json(prompt));
    CHECK(round.rendered_text == prompt.rendered_text);
    CHECK(round.kind == prompt.kind);
    CHECK(round.issue.cwe_id == prompt.issue.cwe_id);
    CHECK(round.package.has_value() == prompt.package.has_value());
  }
}
