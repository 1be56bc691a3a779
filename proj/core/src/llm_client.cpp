#include "disco/llm_client.hpp"

#include "disco/errors.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <deque>
#include <map>
#include <thread>

namespace disco::llm {

Json transcript_to_json(const TranscriptEntry& entry) {
  return Json{
      {"request_text", entry.request_text},
      {"response_text", entry.response_text},
      {"timestamp", entry.timestamp},
      {"model_label", entry.model_label},
  };
}

TranscriptEntry transcript_from_json(const Json& row) {
  TranscriptEntry entry;
  entry.request_text = row.value("request_text", "");
  entry.response_text = row.value("response_text", "");
  entry.timestamp = row.value("timestamp", "");
  entry.model_label = row.value("model_label", "");
  return entry;
}

std::vector<TranscriptEntry> TextGenClient::transcript() const {
  std::lock_guard<std::mutex> lock(mutex_);
  return transcript_;
}

void TextGenClient::save_transcript(const std::filesystem::path& path) const {
  std::vector<Json> rows;
  for (const TranscriptEntry& entry : transcript()) {
    rows.push_back(transcript_to_json(entry));
  }
  write_jsonl(path, rows);
}

void TextGenClient::record(TranscriptEntry entry) {
  std::lock_guard<std::mutex> lock(mutex_);
  transcript_.push_back(std::move(entry));
}

std::string utc_timestamp_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t seconds = std::chrono::system_clock::to_time_t(now);
  std::tm utc{};
  gmtime_r(&seconds, &utc);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}Z", utc.tm_year + 1900,
                     utc.tm_mon + 1, utc.tm_mday, utc.tm_hour, utc.tm_min, utc.tm_sec);
}

struct ReplayClient::Impl {
  std::mutex mutex;
  std::map<std::string, std::deque<TranscriptEntry>> by_request;
  std::size_t remaining = 0;
};

ReplayClient::ReplayClient(std::vector<TranscriptEntry> entries)
    : impl_(std::make_shared<Impl>()) {
  for (TranscriptEntry& entry : entries) {
    impl_->by_request[entry.request_text].push_back(std::move(entry));
    ++impl_->remaining;
  }
}

namespace {

std::vector<TranscriptEntry> load_cassette(const std::filesystem::path& path) {
  std::vector<TranscriptEntry> entries;
  for (const Json& row : read_jsonl(path)) {
    entries.push_back(transcript_from_json(row));
  }
  return entries;
}

}  // namespace

ReplayClient::ReplayClient(const std::filesystem::path& cassette_path)
    : ReplayClient(load_cassette(cassette_path)) {}

std::string ReplayClient::complete(const CompletionRequest& request) {
  TranscriptEntry entry;
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    auto it = impl_->by_request.find(request.prompt);
    if (it == impl_->by_request.end() || it->second.empty()) {
      std::string prefix = request.prompt.substr(0, 80);
      for (char& c : prefix) {
        if (c == '\n') c = ' ';
      }
      throw Error(ErrorKind::replay_miss,
                  fmt::format("no cassette entry for request beginning \"{}\"", prefix));
    }
    entry = std::move(it->second.front());
    it->second.pop_front();
    --impl_->remaining;
  }
  record(entry);  // replay keeps the recorded timestamp
  return entry.response_text;
}

std::size_t ReplayClient::remaining() const {
  std::lock_guard<std::mutex> lock(impl_->mutex);
  return impl_->remaining;
}

LiveClient::Options LiveClient::options_from_env() {
  Options options;
  if (const char* endpoint = std::getenv("DISCO_LLM_ENDPOINT")) options.endpoint = endpoint;
  if (const char* key = std::getenv("DISCO_LLM_KEY")) options.api_key = key;
  if (options.endpoint.empty()) {
    throw Error(ErrorKind::validation,
                "live mode needs DISCO_LLM_ENDPOINT (and optionally DISCO_LLM_KEY)");
  }
  return options;
}

LiveClient::LiveClient(Options options) : options_(std::move(options)) {
  if (options_.endpoint.empty()) {
    throw Error(ErrorKind::validation, "live client needs a nonempty endpoint");
  }
  if (options_.max_attempts < 1) options_.max_attempts = 1;
}

std::string LiveClient::complete(const CompletionRequest& request) {
  const Json body{
      {"prompt", request.prompt},
      {"temperature", request.temperature},
      {"max_tokens", request.max_tokens},
      {"model", options_.model_label},
  };
  const std::string payload = dump_json(body);

  std::string last_failure = "no attempt made";
  for (int attempt = 1; attempt <= options_.max_attempts; ++attempt) {
    if (attempt > 1) {
      const int delay = options_.backoff_ms << (attempt - 2);
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
    }
    httplib::Client http(options_.endpoint);
    http.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!options_.api_key.empty()) {
      headers.emplace("Authorization", fmt::format("Bearer {}", options_.api_key));
    }
    auto result = http.Post("/v1/complete", headers, payload, "application/json");
    if (!result) {
      last_failure = fmt::format("connection error ({})", httplib::to_string(result.error()));
      continue;  // transport problem: retry
    }
    if (result->status >= 500) {
      last_failure = fmt::format("HTTP {}", result->status);
      continue;  // server-side hiccup: retry
    }
    if (result->status != 200) {
      // 4xx is a service rejection, not a transient fault -- do not retry.
      throw Error(ErrorKind::transport,
                  fmt::format("endpoint rejected request: HTTP {} {}", result->status,
                              result->body.substr(0, 200)));
    }
    const Json parsed = Json::parse(result->body, nullptr, false);
    if (parsed.is_discarded() || !parsed.contains("text") || !parsed["text"].is_string()) {
      throw Error(ErrorKind::transport,
                  "endpoint returned a malformed completion (expected {\"text\": ...})");
    }
    TranscriptEntry entry;
    entry.request_text = request.prompt;
    entry.response_text = parsed["text"].get<std::string>();
    entry.timestamp = utc_timestamp_now();
    entry.model_label = options_.model_label;
    record(entry);
    return entry.response_text;
  }
  throw Error(ErrorKind::transport,
              fmt::format("completion failed after {} attempts; last failure: {}",
                          options_.max_attempts, last_failure));
}

}  // namespace disco::llm
