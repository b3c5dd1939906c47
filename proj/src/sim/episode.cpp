#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "odyn/episode.hpp"

namespace odyn::sim {

static_assert(std::endian::native == std::endian::little, "episode files are written in host byte order");

void SimConfig::validate() const {
  if (width == 0 || height == 0) throw std::invalid_argument("sim config: zero image extent");
  if (shape_ids.empty()) throw std::invalid_argument("sim config: no objects");
  for (int id : shape_ids) (void)shape(id);
  if (min_steps < 1 || min_steps > max_steps) throw std::invalid_argument("sim config: bad step range");
  if (physics.dt <= 0) throw std::invalid_argument("sim config: dt must be positive");
  if (policy.speed > physics.v_max) throw std::invalid_argument("sim config: policy speed exceeds v_max");
}

std::span<const std::uint8_t> Episode::mask(std::size_t t, std::size_t object) const {
  return std::span<const std::uint8_t>(steps.at(t).masks).subspan(object * pixels(), pixels());
}

WorldState initial_world(const SimConfig& cfg, std::mt19937_64& rng) {
  WorldState w;
  w.container = cfg.container;
  w.params = cfg.physics;
  w.pusher.radius = cfg.pusher_radius;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double W = w.container.width, H = w.container.height;

  // Objects start clustered in the central region so that pushes interact.
  for (std::size_t k = 0; k < cfg.shape_ids.size(); ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < cfg.placement_attempts && !placed; ++attempt) {
      const double x = W * (0.2 + 0.6 * unit(rng));
      const double y = H * (0.2 + 0.6 * unit(rng));
      const double angle = 2 * std::numbers::pi * unit(rng);
      Body b = make_body(cfg.shape_ids[k], {x, y}, angle);
      const auto verts = b.world_vertices();
      bool ok = true;
      for (const auto& v : verts) ok = ok && v.x > 0.02 && v.x < W - 0.02 && v.y > 0.02 && v.y < H - 0.02;
      for (const auto& o : w.objects) ok = ok && !polygons_overlap(verts, o.world_vertices(), 0.02);
      if (ok) {
        w.objects.push_back(std::move(b));
        placed = true;
      }
    }
    if (!placed) {
      throw SimError("placement of object " + std::to_string(k) + " failed after " +
                     std::to_string(cfg.placement_attempts) + " attempts: container too crowded");
    }
  }
  const double r = cfg.pusher_radius;
  for (int attempt = 0; attempt < cfg.placement_attempts; ++attempt) {
    const Vec2 c{r + 0.01 + (W - 2 * r - 0.02) * unit(rng), r + 0.01 + (H - 2 * r - 0.02) * unit(rng)};
    bool ok = true;
    for (const auto& o : w.objects) ok = ok && signed_distance(c, o.world_vertices()).distance > r + 0.1;
    if (ok) {
      w.pusher.position = c;
      return w;
    }
  }
  throw SimError("pusher placement failed after " + std::to_string(cfg.placement_attempts) +
                 " attempts: container too crowded");
}

namespace {

void record_objects(const WorldState& w, Step& s) {
  for (const auto& o : w.objects) {
    s.pos.insert(s.pos.end(), {static_cast<float>(o.position.x), static_cast<float>(o.position.y),
                               static_cast<float>(0.5 * o.height)});
    s.vel.insert(s.vel.end(), {static_cast<float>(o.velocity.x), static_cast<float>(o.velocity.y), 0.0f});
  }
}

std::array<float, 6> pusher_state(const WorldState& w) {
  const auto& p = w.pusher;
  return {static_cast<float>(p.position.x), static_cast<float>(p.position.y), static_cast<float>(0.5 * p.height),
          static_cast<float>(p.velocity.x), static_cast<float>(p.velocity.y), 0.0f};
}

}  // namespace

Episode generate_episode(const SimConfig& cfg, std::uint64_t seed, std::vector<WorldState>* states) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> length_dist(cfg.min_steps, cfg.max_steps);
  const std::size_t T = length_dist(rng);
  WorldState w = initial_world(cfg, rng);
  ScriptedPolicy policy(cfg.policy);
  std::uniform_int_distribution<int> random_command(0, 3);

  Episode ep;
  ep.width = static_cast<std::uint32_t>(cfg.width);
  ep.height = static_cast<std::uint32_t>(cfg.height);
  ep.num_objects = static_cast<std::uint32_t>(cfg.shape_ids.size());
  if (states) states->clear();
  for (std::size_t t = 0; t < T; ++t) {
    if (states) states->push_back(w);
    Frames f = render(w, cfg.width, cfg.height);
    Step s;
    s.rgb = std::move(f.rgb);
    s.depth = std::move(f.depth);
    for (const auto& m : f.masks) s.masks.insert(s.masks.end(), m.begin(), m.end());
    record_objects(w, s);
    if (t + 1 < T) {
      const Vec2 action = cfg.policy_kind == PolicyKind::scripted
                              ? policy.act(w, rng)
                              : command_velocity(static_cast<Command>(random_command(rng)), cfg.policy.speed);
      w = step(w, action);
    }
    // At the last step no t + 1 exists; the latest pusher state is repeated.
    s.control = pusher_state(w);
    ep.steps.push_back(std::move(s));
  }
  return ep;
}

namespace {

template <typename T>
void put(std::vector<std::uint8_t>& out, const T* data, std::size_t count) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(data);
  out.insert(out.end(), p, p + count * sizeof(T));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) { put(out, &v, 1); }

struct Reader {
  std::span<const std::uint8_t> bytes;
  std::size_t at = 0;
  const std::string& origin;

  template <typename T>
  void get(T* data, std::size_t count) {
    const std::size_t n = count * sizeof(T);
    if (at + n > bytes.size()) throw IoError(origin + ": truncated episode file");
    std::memcpy(data, bytes.data() + at, n);
    at += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    get(&v, 1);
    return v;
  }
};

}  // namespace

std::vector<std::uint8_t> encode_episode(const Episode& ep) {
  std::vector<std::uint8_t> out;
  const std::size_t px = ep.pixels(), n = ep.num_objects;
  out.reserve(24 + ep.length() * (px * 4 * 4 + n * px + n * 24 + 24));
  out.insert(out.end(), {'O', 'D', 'Y', 'N'});
  put_u32(out, episode_version);
  put_u32(out, static_cast<std::uint32_t>(ep.length()));
  put_u32(out, ep.num_objects);
  put_u32(out, ep.width);
  put_u32(out, ep.height);
  for (const auto& s : ep.steps) {
    if (s.rgb.size() != px * 3 || s.depth.size() != px || s.masks.size() != n * px || s.pos.size() != n * 3 ||
        s.vel.size() != n * 3) {
      throw IoError("encode_episode: step arrays do not match the header extents");
    }
    put(out, s.rgb.data(), s.rgb.size());
    put(out, s.depth.data(), s.depth.size());
    put(out, s.masks.data(), s.masks.size());
    put(out, s.pos.data(), s.pos.size());
    put(out, s.vel.data(), s.vel.size());
    put(out, s.control.data(), s.control.size());
  }
  return out;
}

Episode decode_episode(std::span<const std::uint8_t> bytes, const std::string& origin) {
  Reader r{bytes, 0, origin};
  char magic[4];
  r.get(magic, 4);
  if (std::memcmp(magic, "ODYN", 4) != 0) throw IoError(origin + ": not an episode file (bad magic)");
  const auto version = r.u32();
  if (version != episode_version) throw IoError(origin + ": unsupported episode version " + std::to_string(version));
  const auto T = r.u32();
  Episode ep;
  ep.num_objects = r.u32();
  ep.width = r.u32();
  ep.height = r.u32();
  const std::size_t px = ep.pixels(), n = ep.num_objects;
  const std::size_t per_step = px * 16 + n * px + n * 24 + 24;
  if (per_step * T > bytes.size()) throw IoError(origin + ": truncated episode file");
  ep.steps.resize(T);
  for (auto& s : ep.steps) {
    s.rgb.resize(px * 3);
    s.depth.resize(px);
    s.masks.resize(n * px);
    s.pos.resize(n * 3);
    s.vel.resize(n * 3);
    r.get(s.rgb.data(), s.rgb.size());
    r.get(s.depth.data(), s.depth.size());
    r.get(s.masks.data(), s.masks.size());
    r.get(s.pos.data(), s.pos.size());
    r.get(s.vel.data(), s.vel.size());
    r.get(s.control.data(), s.control.size());
  }
  if (r.at != bytes.size()) throw IoError(origin + ": trailing bytes after the last step");
  return ep;
}

void write_episode(const Episode& ep, const std::filesystem::path& path) {
  const auto bytes = encode_episode(ep);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path.string() + ": write failed");
}

Episode read_episode(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_episode(bytes, path.string());
}

}  // namespace odyn::sim
