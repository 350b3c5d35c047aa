#include "scenarios.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>

#include "patchlab/error.hpp"

namespace patchlab::tools {

namespace fs = std::filesystem;

void write_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw ConfigError("cannot open '" + tmp.string() + "' for writing");
    os << content;
    if (!os.flush()) throw ConfigError("write to '" + tmp.string() + "' failed");
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    throw ConfigError("cannot move '" + tmp.string() + "' into place: " + ec.message());
  }
}

OutputDir::OutputDir(fs::path root) : root_(std::move(root)) {
  std::error_code ec;
  fs::create_directories(root_, ec);
  if (ec) throw ConfigError("cannot create '" + root_.string() + "': " + ec.message());
}

void OutputDir::write(const std::string& name, const std::string& content) {
  write_atomically(root_ / name, content);
  files_.push_back(name);
}

void OutputDir::write_json(const std::string& name, const Json& j) {
  write(name, j.dump(2) + "\n");
}

void check(ScenarioResult& res, bool cond, const std::string& what) {
  if (!cond) res.failures.push_back(what);
}

std::vector<std::string> scenario_names() {
  return {"toy", "illusion-synth", "rome-roundtrip", "separability"};
}

Json default_config(std::string_view scenario) {
  if (scenario == "toy") return toy_defaults();
  if (scenario == "illusion-synth") return illusion_synth_defaults();
  if (scenario == "rome-roundtrip") return rome_roundtrip_defaults();
  if (scenario == "separability") return separability_defaults();
  throw ConfigError("unknown scenario '" + std::string(scenario) + "'");
}

Json resolve_config(std::string_view scenario, const Json& user) {
  Json merged = default_config(scenario);
  if (!user.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& item : user.items()) {
    if (!merged.contains(item.key())) {
      throw ConfigError("config for '" + std::string(scenario) + "': unknown key '" +
                        item.key() + "'");
    }
    merged[item.key()] = item.value();
  }
  if (merged.at("scenario") != scenario) {
    throw ConfigError("config names scenario '" +
                      merged.at("scenario").get<std::string>() + "', expected '" +
                      std::string(scenario) + "'");
  }
  return merged;
}

std::string config_hash(const Json& config) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : config.dump()) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string utc_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ScenarioResult run_scenario(const Json& config, const fs::path& out) {
  const std::string scenario = config.at("scenario").get<std::string>();
  const std::string started = utc_now();
  OutputDir dir(out);
  ScenarioResult res;
  if (scenario == "toy") {
    res = run_toy(config, dir);
  } else if (scenario == "illusion-synth") {
    res = run_illusion_synth(config, dir);
  } else if (scenario == "rome-roundtrip") {
    res = run_rome_roundtrip(config, dir);
  } else if (scenario == "separability") {
    res = run_separability(config, dir);
  } else {
    throw ConfigError("unknown scenario '" + scenario + "'");
  }
  Json summary = res.summary;
  summary["scenario"] = scenario;
  summary["passed"] = res.ok();
  summary["failures"] = res.failures;
  dir.write_json("summary.json", summary);

  Json manifest{{"scenario", scenario},
                {"config_hash", config_hash(config)},
                {"version", kVersion},
                {"started_at", started},
                {"finished_at", utc_now()},
                {"files", dir.files()}};
  write_atomically(dir.root() / "manifest.json", manifest.dump(2) + "\n");
  return res;
}

}  // namespace patchlab::tools
