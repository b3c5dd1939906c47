#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "odyn/sim.hpp"

namespace odyn::sim {

/// Raised for unreadable, unwritable or malformed files; the message names
/// the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PolicyKind { scripted, random };

struct SimConfig {
  std::size_t width = 32, height = 24;
  /// One object per entry, in object-id order.
  std::vector<int> shape_ids{0, 1, 2};
  std::size_t min_steps = 7, max_steps = 15;
  Container container;
  PhysicsParams physics;
  PolicyKind policy_kind = PolicyKind::scripted;
  PolicyConfig policy;
  double pusher_radius = 0.15;
  int placement_attempts = 1000;

  /// Throws std::invalid_argument on an unusable configuration.
  void validate() const;
};

/// Everything recorded at one time step t. Control is the pusher position ⊕
/// velocity at t + 1.
struct Step {
  std::vector<float> rgb;            // [H][W][3]
  std::vector<float> depth;          // [H][W]
  std::vector<std::uint8_t> masks;   // [N][H][W]
  std::vector<float> pos;            // [N][3]
  std::vector<float> vel;            // [N][3]
  std::array<float, 6> control{};

  bool operator==(const Step&) const = default;
};

struct Episode {
  std::uint32_t width = 0, height = 0, num_objects = 0;
  std::vector<Step> steps;

  std::size_t length() const { return steps.size(); }
  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }
  std::span<const std::uint8_t> mask(std::size_t t, std::size_t object) const;
  bool operator==(const Episode&) const = default;
};

/// (cfg, seed) fully determines the result. When `states` is given it
/// receives the world at every recorded step.
Episode generate_episode(const SimConfig& cfg, std::uint64_t seed, std::vector<WorldState>* states = nullptr);

/// Initial world: non-overlapping objects by rejection sampling, then the
/// pusher in free space. Throws SimError when a placement runs out of
/// attempts.
WorldState initial_world(const SimConfig& cfg, std::mt19937_64& rng);

inline constexpr std::uint32_t episode_version = 1;

/// Little-endian "ODYN" container; see the README for the byte layout.
void write_episode(const Episode& ep, const std::filesystem::path& path);
Episode read_episode(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_episode(const Episode& ep);
Episode decode_episode(std::span<const std::uint8_t> bytes, const std::string& origin = "<memory>");

/// Named dataset roles: train3, test3, test5_2novel, test5_5novel.
const std::vector<std::string>& role_names();
/// Desk-scale configuration of a role at the given resolution.
SimConfig role_config(const std::string& role, std::size_t width = 32, std::size_t height = 24);

struct ManifestEntry {
  std::string file;
  std::uint32_t length = 0, num_objects = 0, width = 0, height = 0;
  std::uint64_t seed = 0;
};

struct Manifest {
  std::string dataset;
  std::uint64_t base_seed = 0;
  std::vector<int> shape_ids;
  std::vector<ManifestEntry> episodes;

  std::size_t total_steps() const;
};

inline constexpr const char* manifest_file_name = "manifest.json";

/// Writes episodes seeded base_seed, base_seed + 1, … and the manifest into
/// out_dir. Episodes are generated on up to `threads` workers; the output
/// does not depend on the thread count.
Manifest generate_dataset(const SimConfig& cfg, const std::string& dataset, std::size_t count,
                          std::uint64_t base_seed, const std::filesystem::path& out_dir, unsigned threads = 1);

void write_manifest(const Manifest& m, const std::filesystem::path& dir);
/// Accepts the dataset directory or the manifest file itself.
Manifest read_manifest(const std::filesystem::path& dir_or_file);
std::filesystem::path manifest_directory(const std::filesystem::path& dir_or_file);

}  // namespace odyn::sim
