#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace bwc {

/// Command-line values that replace config keys one for one.
struct ConfigOverrides {
  std::optional<std::size_t> jobs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> criterion;
  std::optional<std::filesystem::path> out_dir;
};

/// Effective configuration. `tree` is the validated JSON document after
/// overrides; relative paths in it resolve against `base_dir`.
struct PipelineConfig {
  nlohmann::json tree;
  std::filesystem::path base_dir;
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;

  /// FNV-1a of the canonical tree, excluding jobs and out_dir, as 16 hex
  /// digits. Recorded in every stage's meta.json.
  std::string hash() const;
};

/// Parses and validates: unknown keys, wrong types and references to
/// engines missing from the `engines` list are ValidationErrors.
PipelineConfig parse_config(const nlohmann::json& tree, const std::filesystem::path& base_dir,
                            const ConfigOverrides& overrides = {});
PipelineConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

const std::vector<std::string>& subcommands();

/// Runs one stage (or `all`, which chains synth through evaluate). Throws
/// bwc::Error on failure.
void run_stage(const std::string& name, const PipelineConfig& config, std::ostream& log);

/// CLI wrapper: returns 0 on success; on failure writes
/// {"error":{"kind":..,"message":..,"subcommand":..}} to `err` and
/// returns 1.
int run_subcommand(const std::string& name, const PipelineConfig& config, std::ostream& log, std::ostream& err);

}  // namespace bwc
