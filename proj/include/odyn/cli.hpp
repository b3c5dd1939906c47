#pragma once

#include <chrono>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "odyn/pipeline.hpp"

namespace odyn::cli {

enum ExitCode : int { ok = 0, usage_error = 1, data_error = 2, numerical_failure = 3 };

/// A dataset that cannot serve the requested command: wrong frame size, too
/// short for the horizon, or missing the attributes a variant reads.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Worker count: ODYN_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
unsigned thread_count();

/// Build identifier baked in at configure time (git describe).
std::string build_id();

/// Record of one command invocation, written before any work starts and
/// completed when the command finishes.
struct RunManifest {
  std::string command;
  std::vector<std::string> args;  // full argument vector after the program name
  std::string config_json;        // resolved configuration
  std::string build;
  std::uint64_t seed = 0;
  std::string started;            // ISO 8601 UTC
  std::string finished;           // empty while running
  int exit_code = -1;
  std::vector<std::string> outputs;
};

inline constexpr const char* run_manifest_name = "run_manifest.json";

std::string iso_timestamp(std::chrono::system_clock::time_point t);
void write_run_manifest(const RunManifest& m, const std::filesystem::path& path);
RunManifest read_run_manifest(const std::filesystem::path& path);

/// Arguments of a recorded run, with the value of --out replaced when
/// `out` is not empty.
std::vector<std::string> rerun_args(const RunManifest& m, const std::filesystem::path& out = {});

/// Grouped bar chart (datasets as groups, one bar per variant and horizon,
/// y axis mean IoU on [0, 1]) as a standalone SVG document. Throws
/// std::invalid_argument when `reports` is empty.
std::string bar_chart_svg(std::span<const pipeline::EvalReport> reports);
/// Renders first and only then creates the file, so a failure leaves no file.
void write_bar_chart(std::span<const pipeline::EvalReport> reports, const std::filesystem::path& path);

/// Echoes the ground-truth masks: the upper bound every scorer must give 1.
pipeline::RolloutFn oracle_rollout();

/// Entry point of the `odyn` tool; returns the process exit code.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace odyn::cli
