#include "disco/manifest.hpp"

namespace disco::manifest {

Json manifest_to_json(const RunManifest& manifest) {
  return Json{
      {"tool_version", kToolVersion},
      {"command", manifest.command},
      {"argv", manifest.argv},
      {"config", manifest.config},
      {"inputs", manifest.inputs},
      {"outputs", manifest.outputs},
      {"wall_time_s", manifest.wall_time_s},
      {"finished_utc", manifest.finished_utc},
  };
}

void write_manifest(const std::filesystem::path& path, const RunManifest& manifest) {
  write_json_file(path, manifest_to_json(manifest));
}

}  // namespace disco::manifest
