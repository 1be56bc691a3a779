#pragma once

#include "disco/jsonl.hpp"

#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace disco::llm {

struct CompletionRequest {
  std::string prompt;
  double temperature = 0.7;
  int max_tokens = 2048;
};

// One request/response exchange. Cassette files are JSONL of these entries;
// replayed exchanges keep their recorded timestamps so replay runs stay
// byte-reproducible.
struct TranscriptEntry {
  std::string request_text;
  std::string response_text;
  std::string timestamp;  // ISO-8601 UTC
  std::string model_label;
};

Json transcript_to_json(const TranscriptEntry& entry);
TranscriptEntry transcript_from_json(const Json& row);

class TextGenClient {
 public:
  virtual ~TextGenClient() = default;
  virtual std::string complete(const CompletionRequest& request) = 0;

  std::vector<TranscriptEntry> transcript() const;
  void save_transcript(const std::filesystem::path& path) const;

 protected:
  void record(TranscriptEntry entry);

 private:
  mutable std::mutex mutex_;
  std::vector<TranscriptEntry> transcript_;
};

// Replays recorded exchanges. Responses are keyed by exact request text;
// duplicate requests are served in cassette order. A request that is not in
// the cassette fails with a replay-miss error quoting the request prefix.
class ReplayClient final : public TextGenClient {
 public:
  explicit ReplayClient(const std::filesystem::path& cassette_path);
  explicit ReplayClient(std::vector<TranscriptEntry> entries);

  std::string complete(const CompletionRequest& request) override;

  std::size_t remaining() const;

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

// Talks to an HTTP text-generation endpoint: POST <endpoint>/v1/complete with
// {"prompt", "temperature", "max_tokens", "model"}; expects {"text": ...}.
// Transient transport failures (connection errors, HTTP 5xx) are retried with
// exponential backoff, at most max_attempts total attempts.
class LiveClient final : public TextGenClient {
 public:
  struct Options {
    std::string endpoint;     // e.g. "http://127.0.0.1:8080"
    std::string api_key;      // sent as a bearer token when nonempty
    std::string model_label;  // free-form tag recorded in transcripts
    int max_attempts = 3;
    int backoff_ms = 250;  // doubles per retry
  };

  // Reads DISCO_LLM_ENDPOINT / DISCO_LLM_KEY.
  static Options options_from_env();

  explicit LiveClient(Options options);

  std::string complete(const CompletionRequest& request) override;

 private:
  Options options_;
};

std::string utc_timestamp_now();

}  // namespace disco::llm
