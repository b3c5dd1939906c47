#include <algorithm>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "odyn/cli.hpp"

#ifndef ODYN_BUILD_ID
#define ODYN_BUILD_ID "unknown"
#endif

namespace odyn::cli {

namespace fs = std::filesystem;
using nlohmann::json;

unsigned thread_count() {
  if (const char* env = std::getenv("ODYN_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::string build_id() { return ODYN_BUILD_ID; }

std::string iso_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm utc{};
  gmtime_r(&secs, &utc);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &utc);
  return buf;
}

void write_run_manifest(const RunManifest& m, const fs::path& path) {
  json j;
  j["command"] = m.command;
  j["args"] = m.args;
  json config;
  try {
    config = m.config_json.empty() ? json::object() : json::parse(m.config_json);
  } catch (const json::exception&) {
    config = m.config_json;
  }
  j["config"] = config;
  j["build"] = m.build;
  j["seed"] = m.seed;
  j["started"] = m.started;
  j["finished"] = m.finished.empty() ? json(nullptr) : json(m.finished);
  j["exit_code"] = m.exit_code < 0 ? json(nullptr) : json(m.exit_code);
  j["outputs"] = m.outputs;
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Replaced atomically so a crash never leaves a half-written record.
  const fs::path partial = path.string() + ".partial";
  {
    std::ofstream out(partial, std::ios::binary | std::ios::trunc);
    out << j.dump(2) << '\n';
    if (!out) throw sim::IoError(partial.string() + ": cannot write run manifest");
  }
  fs::rename(partial, path);
}

RunManifest read_run_manifest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sim::IoError(path.string() + ": cannot open run manifest");
  try {
    const json j = json::parse(in);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.args = j.at("args").get<std::vector<std::string>>();
    m.config_json = j.at("config").dump();
    m.build = j.at("build").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started = j.at("started").get<std::string>();
    if (!j.at("finished").is_null()) m.finished = j.at("finished").get<std::string>();
    if (!j.at("exit_code").is_null()) m.exit_code = j.at("exit_code").get<int>();
    m.outputs = j.at("outputs").get<std::vector<std::string>>();
    return m;
  } catch (const json::exception& e) {
    throw sim::IoError(path.string() + ": malformed run manifest: " + e.what());
  }
}

std::vector<std::string> rerun_args(const RunManifest& m, const fs::path& out) {
  std::vector<std::string> args = m.args;
  if (out.empty()) return args;
  bool replaced = false;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--out" && i + 1 < args.size()) {
      args[i + 1] = out.string();
      replaced = true;
    } else if (args[i].rfind("--out=", 0) == 0) {
      args[i] = "--out=" + out.string();
      replaced = true;
    }
  }
  if (!replaced) {
    args.push_back("--out");
    args.push_back(out.string());
  }
  return args;
}

}  // namespace odyn::cli
