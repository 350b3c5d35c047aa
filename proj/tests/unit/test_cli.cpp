#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "patchlab/error.hpp"
#include "scenarios.hpp"

using namespace patchlab;
using namespace patchlab::tools;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() /
                     ("patchlab_cli_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(PATCHLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultsResolveUnchanged) {
  for (const auto& name : scenario_names()) {
    const Json d = default_config(name);
    EXPECT_EQ(resolve_config(name, d), d) << name;
    EXPECT_EQ(resolve_config(name, Json::object()), d) << name;
  }
  EXPECT_THROW(default_config("nope"), ConfigError);
}

TEST(Config, UnknownKeyAndWrongScenarioRejected) {
  EXPECT_THROW(resolve_config("toy", Json{{"grid_stepp", 1}}), ConfigError);
  EXPECT_THROW(resolve_config("toy", Json{{"scenario", "separability"}}), ConfigError);
  EXPECT_THROW(resolve_config("toy", Json::array()), ConfigError);
}

TEST(Config, HashIsStableAndSensitive) {
  const Json a = default_config("toy");
  Json b = a;
  b["seed"] = 1;
  EXPECT_EQ(config_hash(a), config_hash(default_config("toy")));
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}

TEST(Scenario, ZeroPairCountRejected) {
  const Json cfg = resolve_config("illusion-synth", Json{{"pair_count", 0}});
  EXPECT_THROW(run_scenario(cfg, scratch("zero_pairs")), ConfigError);
}

TEST(Scenario, EmptyAlphaGridRejected) {
  const Json cfg = resolve_config("rome-roundtrip", Json{{"alpha_sq_grid", Json::array()}});
  EXPECT_THROW(run_scenario(cfg, scratch("empty_grid")), ConfigError);
}

TEST(Scenario, ToyWritesManifestListingEveryFile) {
  const fs::path out = scratch("toy");
  const ScenarioResult r = run_scenario(default_config("toy"), out);
  EXPECT_TRUE(r.ok());
  const Json manifest = Json::parse(slurp(out / "manifest.json"));
  std::vector<std::string> listed = manifest.at("files");
  std::vector<std::string> present;
  for (const auto& e : fs::directory_iterator(out)) {
    if (e.path().filename() != "manifest.json") present.push_back(e.path().filename());
  }
  std::sort(listed.begin(), listed.end());
  std::sort(present.begin(), present.end());
  EXPECT_EQ(listed, present);
  EXPECT_EQ(manifest.at("config_hash"), config_hash(default_config("toy")));
  fs::remove_all(out);
}

TEST(Scenario, ToyIsByteDeterministic) {
  const fs::path a = scratch("det_a");
  const fs::path b = scratch("det_b");
  run_scenario(default_config("toy"), a);
  run_scenario(default_config("toy"), b);
  for (const auto& e : fs::directory_iterator(a)) {
    if (e.path().filename() == "manifest.json") continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path();
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Binary, ExitCodes) {
  const fs::path out = scratch("bin");
  EXPECT_EQ(run_cli("toy --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "toy_table.csv"));
  EXPECT_EQ(run_cli("no-such-scenario"), 2);
  EXPECT_EQ(run_cli("toy --config /definitely/missing.json"), 2);

  const fs::path bad = out / "bad.json";
  std::ofstream(bad) << "{\"seed\": 1, \"unknown\": true}";
  EXPECT_EQ(run_cli("toy --config " + bad.string() + " --out " + out.string()), 2);
  std::ofstream(bad) << "{not json";
  EXPECT_EQ(run_cli("toy --config " + bad.string() + " --out " + out.string()), 2);

  const fs::path defaults = out / "defaults.json";
  EXPECT_EQ(run_cli("defaults separability --out " + defaults.string()), 0);
  EXPECT_EQ(Json::parse(slurp(defaults)), default_config("separability"));
  fs::remove_all(out);
}
