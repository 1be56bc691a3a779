#include "disco/errors.hpp"
#include "disco/llm_client.hpp"

#include <doctest.h>

#include "test_util.hpp"

using disco::Error;
namespace llm = disco::llm;

namespace {

llm::TranscriptEntry entry(const std::string& request, const std::string& response) {
  llm::TranscriptEntry e;
  e.request_text = request;
  e.response_text = response;
  e.timestamp = "2025-11-02T12:00:00Z";
  e.model_label = "test";
  return e;
}

}  // namespace

TEST_CASE("replay serves duplicate requests in cassette order") {
  llm::ReplayClient client({entry("q", "first"), entry("q", "second"), entry("r", "only")});
  CHECK(client.remaining() == 3);
  CHECK(client.complete({"q", 0.0, 10}) == "first");
  CHECK(client.complete({"r", 0.0, 10}) == "only");
  CHECK(client.complete({"q", 0.0, 10}) == "second");
  CHECK(client.remaining() == 0);
}

TEST_CASE("a replay miss names the unmatched request") {
  llm::ReplayClient client({entry("known request", "ok")});
  try {
    client.complete({"unknown request text", 0.0, 10});
    FAIL("expected a replay miss");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unknown request") != std::string::npos);
  }
  // exhausting a key also misses
  CHECK(client.complete({"known request", 0.0, 10}) == "ok");
  CHECK_THROWS_AS(client.complete({"known request", 0.0, 10}), Error);
}

TEST_CASE("clients record their exchanges and transcripts round trip") {
  testutil::TempDir tmp;
  llm::ReplayClient client({entry("a", "ra"), entry("b", "rb")});
  client.complete({"a", 0.0, 10});
  client.complete({"b", 0.0, 10});
  const auto transcript = client.transcript();
  REQUIRE(transcript.size() == 2);
  CHECK(transcript[0].request_text == "a");
  CHECK(transcript[0].response_text == "ra");
  // replay keeps the recorded timestamp so replays stay byte-stable
  CHECK(transcript[0].timestamp == "2025-11-02T12:00:00Z");

  client.save_transcript(tmp.file("cassette.jsonl"));
  llm::ReplayClient again(tmp.file("cassette.jsonl"));
  CHECK(again.remaining() == 2);
  CHECK(again.complete({"a", 0.0, 10}) == "ra");
  CHECK(again.complete({"b", 0.0, 10}) == "rb");
}

TEST_CASE("transcript json round trip") {
  const auto e = entry("req\nwith lines", "resp");
  const auto round = llm::transcript_from_json(llm::transcript_to_json(e));
  CHECK(round.request_text == e.request_text);
  CHECK(round.response_text == e.response_text);
  CHECK(round.timestamp == e.timestamp);
  CHECK(round.model_label == e.model_label);
}

TEST_CASE("live client options come from the environment") {
  ::setenv("DISCO_LLM_ENDPOINT", "http://127.0.0.1:9", 1);
  ::setenv("DISCO_LLM_KEY", "k123", 1);
  const auto options = llm::LiveClient::options_from_env();
  CHECK(options.endpoint == "http://127.0.0.1:9");
  CHECK(options.api_key == "k123");
  ::unsetenv("DISCO_LLM_ENDPOINT");
  ::unsetenv("DISCO_LLM_KEY");
}

TEST_CASE("utc timestamps are ISO-8601 shaped") {
  const std::string ts = llm::utc_timestamp_now();
  REQUIRE(ts.size() == 20);
  CHECK(ts[4] == '-');
  CHECK(ts[10] == 'T');
  CHECK(ts.back() == 'Z');
}
