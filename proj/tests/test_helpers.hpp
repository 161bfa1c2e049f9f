#pragma once

#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

namespace bwc::testing {

/// Fresh empty directory under the system temp dir, unique per call.
inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::random_device rd;
  const auto dir = std::filesystem::temp_directory_path() /
                   ("bwc-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace bwc::testing
