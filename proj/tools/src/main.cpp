#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "patchlab/error.hpp"
#include "scenarios.hpp"

namespace {

using patchlab::Json;
namespace tools = patchlab::tools;

constexpr int kExitFailed = 1;
constexpr int kExitConfig = 2;

Json read_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw patchlab::ConfigError("cannot read config '" + path + "'");
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw patchlab::ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

int run(const std::string& scenario, const std::string& config_path,
        const std::optional<std::uint64_t>& seed, const std::string& out_dir) {
  Json user = config_path.empty() ? Json::object() : read_config(config_path);
  Json config = tools::resolve_config(scenario, user);
  if (seed) config["seed"] = *seed;
  const auto res = tools::run_scenario(config, out_dir);
  std::printf("%s: %s (outputs in %s)\n", scenario.c_str(),
              res.ok() ? "all checks passed" : "checks FAILED", out_dir.c_str());
  for (const auto& f : res.failures) std::printf("  failure: %s\n", f.c_str());
  return res.ok() ? 0 : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"patchlab: subspace activation patching experiments"};
  app.require_subcommand(1);

  struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = "patchlab_out";
  };
  std::vector<std::pair<std::string, Options>> runs;
  runs.reserve(tools::scenario_names().size());
  for (const auto& name : tools::scenario_names()) {
    runs.emplace_back(name, Options{});
    auto& opts = runs.back().second;
    auto* sub = app.add_subcommand(name, "run the " + name + " scenario");
    sub->add_option("--config", opts.config, "JSON config (missing keys take defaults)")
        ->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "override the config seed");
    sub->add_option("--out", opts.out, "output directory")->capture_default_str();
  }

  std::string defaults_for;
  std::string defaults_out;
  auto* defaults = app.add_subcommand("defaults", "print a scenario's default config");
  defaults->add_option("scenario", defaults_for, "scenario name")->required();
  defaults->add_option("--out", defaults_out, "write to this file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (defaults->parsed()) {
      const std::string text = tools::default_config(defaults_for).dump(2) + "\n";
      if (defaults_out.empty()) {
        std::cout << text;
      } else {
        tools::write_atomically(defaults_out, text);
      }
      return 0;
    }
    for (const auto& [name, opts] : runs) {
      if (app.got_subcommand(name)) return run(name, opts.config, opts.seed, opts.out);
    }
  } catch (const patchlab::ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const Json::exception& e) {
    std::fprintf(stderr, "error: bad config value: %s\n", e.what());
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const patchlab::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailed;
  }
  return kExitConfig;
}
