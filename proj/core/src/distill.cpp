#include "disco/distill.hpp"

#include "disco/errors.hpp"

#include <fmt/format.h>

#include <atomic>
#include <cctype>
#include <thread>

namespace disco::distill {

namespace {

bool at_line_start(const std::string& text, std::size_t pos) {
  return pos == 0 || text[pos - 1] == '\n';
}

std::size_t find_key(const std::string& text, const std::string& key, std::size_t from) {
  std::size_t pos = from;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    if (at_line_start(text, pos)) return pos;
    pos += 1;
  }
  return std::string::npos;
}

bool is_fence_line(std::string_view line) {
  if (line.size() < 3 || line.substr(0, 3) != "```") return false;
  for (char c : line.substr(3)) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '+' || c == '-')) {
      return false;
    }
  }
  return true;
}

std::string clean_section(const std::string& raw) {
  // drop fence lines, then trim outer whitespace
  std::string joined;
  std::string line;
  auto flush = [&]() {
    if (!is_fence_line(line)) {
      joined += line;
      joined += '\n';
    }
    line.clear();
  };
  for (char c : raw) {
    if (c == '\n') {
      flush();
    } else {
      line.push_back(c);
    }
  }
  flush();
  std::size_t begin = 0;
  while (begin < joined.size() &&
         std::isspace(static_cast<unsigned char>(joined[begin]))) {
    ++begin;
  }
  std::size_t end = joined.size();
  while (end > begin && std::isspace(static_cast<unsigned char>(joined[end - 1]))) {
    --end;
  }
  return joined.substr(begin, end - begin);
}

}  // namespace

std::vector<std::string> parse_sections(const std::string& text,
                                        const std::vector<std::string>& keys) {
  std::vector<std::size_t> key_pos(keys.size());
  std::size_t cursor = 0;
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const std::size_t pos = find_key(text, keys[k], cursor);
    if (pos == std::string::npos) {
      throw Error(ErrorKind::parse,
                  fmt::format("generation is missing key '{}' (section {} of {})",
                              keys[k], k + 1, keys.size()));
    }
    key_pos[k] = pos;
    cursor = pos + keys[k].size();
  }
  std::vector<std::string> sections(keys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) {
    const std::size_t content_begin = key_pos[k] + keys[k].size();
    const std::size_t content_end = k + 1 < keys.size() ? key_pos[k + 1] : text.size();
    sections[k] = clean_section(text.substr(content_begin, content_end - content_begin));
  }
  return sections;
}

ParsedGeneration parse_generation(const std::string& text) {
  static const std::vector<std::string> keys = {"VUL:", "REASON:", "SEC:", "REASON:",
                                                "INST:"};
  std::vector<std::string> sections = parse_sections(text, keys);
  for (std::size_t k = 0; k < keys.size(); ++k) {
    if (sections[k].empty()) {
      throw Error(ErrorKind::validation,
                  fmt::format("empty section for key '{}' (section {} of {})", keys[k],
                              k + 1, keys.size()));
    }
  }
  ParsedGeneration parsed;
  parsed.vul_code = std::move(sections[0]);
  parsed.reason_vul = std::move(sections[1]);
  parsed.sec_code = std::move(sections[2]);
  parsed.reason_sec = std::move(sections[3]);
  parsed.instruction = std::move(sections[4]);
  return parsed;
}

Json generation_to_json(const GenerationRecord& record) {
  Json row = knowledge::prompt_to_json(record.prompt);
  row["id"] = record.id;
  row["raw_text"] = record.raw_text;
  row["vul_code"] = record.parsed.vul_code;
  row["reason_vul"] = record.parsed.reason_vul;
  row["sec_code"] = record.parsed.sec_code;
  row["reason_sec"] = record.parsed.reason_sec;
  row["instruction"] = record.parsed.instruction;
  return row;
}

GenerationRecord generation_from_json(const Json& row) {
  GenerationRecord record;
  record.id = row.value("id", "");
  record.prompt = knowledge::prompt_from_json(row);
  record.raw_text = row.value("raw_text", "");
  record.parsed.vul_code = row.value("vul_code", "");
  record.parsed.reason_vul = row.value("reason_vul", "");
  record.parsed.sec_code = row.value("sec_code", "");
  record.parsed.reason_sec = row.value("reason_sec", "");
  record.parsed.instruction = row.value("instruction", "");
  return record;
}

DistillOutcome run_distillation(const std::vector<knowledge::PromptRecord>& prompts,
                                llm::TextGenClient& client,
                                const DistillOptions& options) {
  struct Slot {
    bool ok = false;
    GenerationRecord record;
    std::string error;
  };
  std::vector<Slot> slots(prompts.size());

  const int workers =
      std::max(1, std::min<int>(options.workers, static_cast<int>(prompts.size())));
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    while (true) {
      const std::size_t index = next.fetch_add(1);
      if (index >= prompts.size()) break;
      Slot& slot = slots[index];
      slot.record.id = fmt::format("gen-{:06}", index);
      slot.record.prompt = prompts[index];
      try {
        llm::CompletionRequest request;
        request.prompt = prompts[index].rendered_text;
        request.temperature = options.temperature;
        request.max_tokens = options.max_tokens;
        slot.record.raw_text = client.complete(request);
        slot.record.parsed = parse_generation(slot.record.raw_text);
        slot.ok = true;
      } catch (const Error& err) {
        slot.error = err.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& thread : pool) thread.join();
  }

  DistillOutcome outcome;
  for (std::size_t index = 0; index < slots.size(); ++index) {
    Slot& slot = slots[index];
    if (slot.ok) {
      outcome.records.push_back(std::move(slot.record));
    } else {
      outcome.failures.push_back({slot.record.id, std::move(slot.error)});
    }
  }
  return outcome;
}

}  // namespace disco::distill
