#pragma once

#include "disco/jsonl.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace disco::manifest {

inline constexpr std::string_view kToolVersion = "0.1.0";

// Provenance sidecar written next to a command's primary output: enough to
// say what ran, on what, and what it produced.
struct RunManifest {
  std::string command;  // subcommand path, e.g. "corpus build"
  std::vector<std::string> argv;
  Json config = Json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  double wall_time_s = 0.0;
  std::string finished_utc;
};

Json manifest_to_json(const RunManifest& manifest);

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest);

}  // namespace disco::manifest
