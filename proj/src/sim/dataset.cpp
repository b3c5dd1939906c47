#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "odyn/episode.hpp"

namespace odyn::sim {

namespace fs = std::filesystem;
using nlohmann::json;

const std::vector<std::string>& role_names() {
  static const std::vector<std::string> names{"train3", "test3", "test5_2novel", "test5_5novel"};
  return names;
}

SimConfig role_config(const std::string& role, std::size_t width, std::size_t height) {
  SimConfig cfg;
  cfg.width = width;
  cfg.height = height;
  if (role == "train3" || role == "test3") {
    cfg.shape_ids = {0, 1, 2};
    cfg.min_steps = 7;
    cfg.max_steps = 15;
  } else if (role == "test5_2novel") {
    cfg.shape_ids = {0, 1, 2, 3, 4};
    cfg.min_steps = 7;
    cfg.max_steps = 50;
  } else if (role == "test5_5novel") {
    cfg.shape_ids = {3, 4, 5, 6, 7};
    cfg.min_steps = 7;
    cfg.max_steps = 50;
  } else {
    throw std::invalid_argument("unknown dataset role '" + role + "' (expected train3, test3, test5_2novel or test5_5novel)");
  }
  return cfg;
}

std::size_t Manifest::total_steps() const {
  return std::accumulate(episodes.begin(), episodes.end(), std::size_t{0},
                         [](std::size_t acc, const ManifestEntry& e) { return acc + e.length; });
}

namespace {

std::string episode_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "episode_%05zu.odyn", index);
  return buf;
}

}  // namespace

Manifest generate_dataset(const SimConfig& cfg, const std::string& dataset, std::size_t count,
                          std::uint64_t base_seed, const fs::path& out_dir, unsigned threads) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(out_dir.string() + ": cannot create directory: " + ec.message());

  Manifest m;
  m.dataset = dataset;
  m.base_seed = base_seed;
  m.shape_ids = cfg.shape_ids;
  m.episodes.resize(count);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_lock;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        const std::uint64_t seed = base_seed + i;
        const Episode ep = generate_episode(cfg, seed);
        const std::string name = episode_file_name(i);
        write_episode(ep, out_dir / name);
        m.episodes[i] = {name, static_cast<std::uint32_t>(ep.length()), ep.num_objects, ep.width, ep.height, seed};
      } catch (...) {
        std::lock_guard lock(failure_lock);
        if (!failure) failure = std::current_exception();
        next = count;
      }
    }
  };
  const unsigned n_threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < n_threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  write_manifest(m, out_dir);
  return m;
}

void write_manifest(const Manifest& m, const fs::path& dir) {
  json j;
  j["dataset"] = m.dataset;
  j["base_seed"] = m.base_seed;
  j["shape_ids"] = m.shape_ids;
  j["episode_count"] = m.episodes.size();
  j["total_steps"] = m.total_steps();
  j["episodes"] = json::array();
  for (const auto& e : m.episodes) {
    j["episodes"].push_back({{"file", e.file},
                             {"T", e.length},
                             {"N", e.num_objects},
                             {"W", e.width},
                             {"H", e.height},
                             {"seed", e.seed}});
  }
  const fs::path path = dir / manifest_file_name;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw IoError(path.string() + ": write failed");
}

fs::path manifest_directory(const fs::path& dir_or_file) {
  return fs::is_directory(dir_or_file) ? dir_or_file : dir_or_file.parent_path();
}

Manifest read_manifest(const fs::path& dir_or_file) {
  const fs::path path = fs::is_directory(dir_or_file) ? dir_or_file / manifest_file_name : dir_or_file;
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open manifest");
  try {
    const json j = json::parse(in);
    Manifest m;
    m.dataset = j.at("dataset").get<std::string>();
    m.base_seed = j.at("base_seed").get<std::uint64_t>();
    m.shape_ids = j.at("shape_ids").get<std::vector<int>>();
    for (const auto& e : j.at("episodes")) {
      m.episodes.push_back({e.at("file").get<std::string>(), e.at("T").get<std::uint32_t>(),
                            e.at("N").get<std::uint32_t>(), e.at("W").get<std::uint32_t>(),
                            e.at("H").get<std::uint32_t>(), e.at("seed").get<std::uint64_t>()});
    }
    if (j.contains("episode_count") && j["episode_count"].get<std::size_t>() != m.episodes.size()) {
      throw IoError(path.string() + ": episode_count disagrees with the episode list");
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed manifest: " + e.what());
  }
}

}  // namespace odyn::sim
