#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace testutil {

inline std::filesystem::path fixture_path(const std::string& rel) {
  return std::filesystem::path(DISCO_FIXTURES_DIR) / rel;
}

// Unique scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    const auto tag = std::to_string((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
    path_ = std::filesystem::temp_directory_path() / ("disco-test-" + tag);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace testutil
