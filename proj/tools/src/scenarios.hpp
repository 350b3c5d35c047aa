#pragma once

// Named experiment scenarios behind the command line tool. Each scenario is
// a pure function of its JSON config: it writes CSV/JSON files into an output
// directory and collects failed assertions instead of aborting on them.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "patchlab/serialization.hpp"

namespace patchlab::tools {

inline constexpr const char* kVersion = "0.3.0";

/// Collects output files; every write goes through a temporary file and a
/// rename so a crashed run never leaves a half-written artifact.
class OutputDir {
 public:
  explicit OutputDir(std::filesystem::path root);
  void write(const std::string& name, const std::string& content);
  void write_json(const std::string& name, const Json& j);
  const std::vector<std::string>& files() const { return files_; }
  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
  std::vector<std::string> files_;
};

void write_atomically(const std::filesystem::path& path, const std::string& content);

struct ScenarioResult {
  std::vector<std::string> failures;
  Json summary = Json::object();
  bool ok() const { return failures.empty(); }
};

/// Records a failure message when `cond` is false.
void check(ScenarioResult& res, bool cond, const std::string& what);

std::vector<std::string> scenario_names();

/// Complete default config for a scenario; throws ConfigError if unknown.
Json default_config(std::string_view scenario);

/// Fills missing top-level keys from the defaults and rejects unknown ones.
Json resolve_config(std::string_view scenario, const Json& user);

/// Runs a resolved config. Writes summary.json and manifest.json last.
ScenarioResult run_scenario(const Json& config, const std::filesystem::path& out);

/// 64-bit FNV-1a of the compact JSON dump, as 16 hex digits.
std::string config_hash(const Json& config);

// Individual scenarios (config already resolved).
ScenarioResult run_toy(const Json& config, OutputDir& out);
ScenarioResult run_illusion_synth(const Json& config, OutputDir& out);
ScenarioResult run_rome_roundtrip(const Json& config, OutputDir& out);
ScenarioResult run_separability(const Json& config, OutputDir& out);

Json toy_defaults();
Json illusion_synth_defaults();
Json rome_roundtrip_defaults();
Json separability_defaults();

}  // namespace patchlab::tools
