#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace disco {

using Json = nlohmann::json;

// Serialization used by every writer below. Model samples are arbitrary
// byte strings, so string fields may carry invalid UTF-8; those bytes are
// replaced with U+FFFD instead of aborting the write.
std::string dump_json(const Json& value, int indent = -1);

// Line-oriented JSON. Blank lines are rejected (a truncated file should not
// silently shrink a dataset); parse failures report 1-based line numbers.
std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& rows);

Json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const Json& value, int indent = 2);

std::string read_text_file(const std::filesystem::path& path);
// All writers go through a temp-file-then-rename so a crash never leaves a
// half-written artifact at the target path.
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Field access helpers that turn missing/mistyped fields into parse errors
// carrying the file and line they came from.
std::string require_string(const Json& row, const char* key,
                           const std::filesystem::path& path, std::size_t line_no);
std::string optional_string(const Json& row, const char* key, const std::string& fallback);

}  // namespace disco
