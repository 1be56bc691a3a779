#pragma once

#include "disco/jsonl.hpp"
#include "disco/train.hpp"

#include <filesystem>
#include <string>

namespace disco::config {

// Parses a key = value / [section] file (comments with '#', quoted strings,
// integers, floats, booleans) into a two-level JSON object. This is the
// config-file dialect next to plain JSON; nothing deeper than one section.
Json parse_sections_text(const std::string& text, const std::string& origin);

// Reads a training config as JSON (*.json) or the sectioned dialect
// (anything else). The result is a plain JSON object; feed it to
// train_config_from_json.
Json load_config_file(const std::filesystem::path& path);

// Recursively overlays `patch` onto `base`; objects merge, scalars replace.
Json merge_config(Json base, const Json& patch);

// Builds a TrainConfig, rejecting unknown keys so typos surface immediately.
train::TrainConfig train_config_from_json(const Json& json);

Json train_config_to_json(const train::TrainConfig& config);

}  // namespace disco::config
