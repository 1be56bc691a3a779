#include "disco/jsonl.hpp"

#include "disco/errors.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>
#include <system_error>

namespace disco {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::parse: return "parse";
    case ErrorKind::validation: return "validation";
    case ErrorKind::capacity: return "capacity";
    case ErrorKind::undefined_metric: return "undefined-metric";
    case ErrorKind::io: return "io";
    case ErrorKind::transport: return "transport";
    case ErrorKind::replay_miss: return "replay-miss";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::internal: return "internal";
  }
  return "unknown";
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::io, fmt::format("cannot open {} for reading", path.string()));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw Error(ErrorKind::io, fmt::format("read failure on {}", path.string()));
  }
  return std::move(buf).str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorKind::io, fmt::format("cannot open {} for writing", tmp.string()));
    }
    out << text;
    out.flush();
    if (!out) {
      throw Error(ErrorKind::io, fmt::format("write failure on {}", tmp.string()));
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw Error(ErrorKind::io,
                fmt::format("cannot move {} into place: {}", path.string(), ec.message()));
  }
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::io, fmt::format("cannot open {} for reading", path.string()));
  }
  std::vector<Json> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      throw Error(ErrorKind::parse,
                  fmt::format("{}:{}: blank line in JSONL file", path.string(), line_no));
    }
    Json parsed = Json::parse(line, nullptr, false);
    if (parsed.is_discarded()) {
      throw Error(ErrorKind::parse,
                  fmt::format("{}:{}: invalid JSON", path.string(), line_no));
    }
    rows.push_back(std::move(parsed));
  }
  if (in.bad()) {
    throw Error(ErrorKind::io, fmt::format("read failure on {}", path.string()));
  }
  return rows;
}

std::string dump_json(const Json& value, int indent) {
  return value.dump(indent, ' ', false, Json::error_handler_t::replace);
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows) {
  std::string out;
  for (const Json& row : rows) {
    out += dump_json(row);
    out += '\n';
  }
  write_text_file(path, out);
}

Json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  Json parsed = Json::parse(text, nullptr, false);
  if (parsed.is_discarded()) {
    throw Error(ErrorKind::parse, fmt::format("{}: invalid JSON document", path.string()));
  }
  return parsed;
}

void write_json_file(const std::filesystem::path& path, const Json& value, int indent) {
  write_text_file(path, dump_json(value, indent) + "\n");
}

std::string require_string(const Json& row, const char* key,
                           const std::filesystem::path& path, std::size_t line_no) {
  if (!row.contains(key) || !row[key].is_string()) {
    throw Error(ErrorKind::parse,
                fmt::format("{}:{}: missing or non-string field '{}'",
                            path.string(), line_no, key));
  }
  return row[key].get<std::string>();
}

std::string optional_string(const Json& row, const char* key, const std::string& fallback) {
  if (row.contains(key) && row[key].is_string()) return row[key].get<std::string>();
  return fallback;
}

}  // namespace disco
