#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace odyn::sim {

struct Vec2 {
  double x = 0, y = 0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator-(Vec2 a) { return {-a.x, -a.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
/// ω × r for a planar angular velocity ω.
inline Vec2 cross(double w, Vec2 r) { return {-w * r.y, w * r.x}; }
inline Vec2 perp(Vec2 a) { return {-a.y, a.x}; }
double length(Vec2 a);
Vec2 rotate(Vec2 a, double angle);

/// Raised when the state stops being finite; the message names the step.
class SimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Convex polygon, counter-clockwise, centroid at the origin.
struct ShapeDef {
  int id = 0;
  std::vector<Vec2> vertices;
  double height = 0;
  std::array<double, 3> color{};
};

/// Eight asymmetric convex shapes. Ids 0-2 are the familiar shapes, 3-7 are
/// held out for the novel-shape datasets.
const std::vector<ShapeDef>& shape_library();
const ShapeDef& shape(int id);

double polygon_area(const std::vector<Vec2>& v);
Vec2 polygon_centroid(const std::vector<Vec2>& v);
/// Moment of inertia about the centroid for uniform density.
double polygon_inertia(const std::vector<Vec2>& v, double mass);
bool is_convex_ccw(const std::vector<Vec2>& v);
bool point_in_polygon(Vec2 p, const std::vector<Vec2>& v);

/// Signed distance from p to a convex CCW polygon (negative inside) and the
/// outward unit normal of the closest feature.
struct SignedDistance {
  double distance = 0;
  Vec2 normal;
};
SignedDistance signed_distance(Vec2 p, const std::vector<Vec2>& polygon);

/// Separating-axis test: true when the polygons come closer than `margin`.
bool polygons_overlap(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double margin = 0);

struct Body {
  int shape_id = 0;
  Vec2 position;  // centroid
  double angle = 0;
  Vec2 velocity;
  double angular_velocity = 0;
  double mass = 1, inertia = 1, height = 0;
  std::vector<Vec2> local;  // vertices relative to the centroid
  double radius = 0;        // bounding radius

  std::vector<Vec2> world_vertices() const;
};

Body make_body(int shape_id, Vec2 position, double angle, double density = 1.0);

struct Pusher {
  Vec2 position;
  Vec2 velocity;
  double radius = 0.15;
  double mass = 1;
  double height = 0.6;
};

/// Axis-aligned walls enclosing [0, width] × [0, height].
struct Container {
  double width = 4.0;
  double height = 3.0;
  /// Vertical extent used to normalize depth.
  double depth_scale = 1.0;
};

struct PhysicsParams {
  double dt = 0.1;
  double friction = 0.4;
  double restitution = 0.0;
  /// Exponential floor-friction proxy, 1/s.
  double linear_damping = 1.5;
  double angular_damping = 1.5;
  double v_max = 5.0;
  double w_max = 10.0;
  /// Pusher mass relative to the heaviest object.
  double pusher_mass_ratio = 20.0;
  int velocity_iterations = 40;
  /// Re-predictions of the end-of-step pose whose overlaps are removed by
  /// velocity impulses.
  int predicted_passes = 8;
  int position_iterations = 200;
  double penetration_tolerance = 1e-3;
  /// Largest object displacement position correction may make in one step;
  /// beyond it the pusher stalls.
  double correction_budget = 0.005;
};

struct WorldState {
  Container container;
  std::vector<Body> objects;
  Pusher pusher;
  PhysicsParams params;
  std::size_t t = 0;
};

/// Sets the pusher velocity to `action`, damps, resolves contacts on
/// velocities, integrates positions (semi-implicit Euler) and removes residual
/// penetration. Throws std::invalid_argument if |action| > v_max and SimError
/// on a non-finite state.
WorldState step(const WorldState& w, Vec2 action);

/// Deepest object-object overlap; zero when all polygons are apart.
double max_object_penetration(const WorldState& w);
/// Deepest vertex excursion beyond the container walls.
double max_wall_penetration(const WorldState& w);

/// Rendered frames, rows top to bottom with pixel (i, j) centered at world
/// ((i + 0.5) sx, (j + 0.5) sy).
struct Frames {
  std::size_t width = 0, height = 0;
  std::vector<float> rgb;                      // [H][W][3]
  std::vector<float> depth;                    // [H][W]
  std::vector<std::vector<std::uint8_t>> masks;  // per object [H][W]
};

inline constexpr std::array<double, 3> background_color{0.55, 0.50, 0.45};
inline constexpr std::array<double, 3> pusher_color{0.08, 0.08, 0.10};

/// Orthographic top-down rasterization at pixel centers. The taller object
/// owns a pixel, ties to the lower id; the pusher shows in RGB and depth but
/// never in masks.
Frames render(const WorldState& w, std::size_t width, std::size_t height);

enum class Command { left, right, forward, backward };
Vec2 command_velocity(Command c, double speed);

struct PolicyConfig {
  double speed = 2.5;
  double epsilon = 0.2;
  /// Minimum centroid distance from the target to every other object after
  /// which a new target is chosen.
  double separation_target = 1.2;
};

/// Object closest to the centroid of all objects; ties to the lowest id.
int choose_target(const WorldState& w, const std::vector<bool>& exclude = {});
/// The deterministic part of the policy: steer behind `target` relative to
/// the other objects' centroid, then push it away from them.
Command greedy_command(const WorldState& w, int target, double speed);

class ScriptedPolicy {
 public:
  explicit ScriptedPolicy(PolicyConfig config = {}) : config_(config) {}
  /// One draw decides random versus greedy, a second picks the random
  /// command, so the stream advances by two draws per call.
  Vec2 act(const WorldState& w, std::mt19937_64& rng);
  int target() const { return target_; }

 private:
  PolicyConfig config_;
  int target_ = -1;
  std::vector<bool> singulated_;
};

}  // namespace odyn::sim
