#include <algorithm>
#include <cmath>
#include <limits>

#include "odyn/sim.hpp"

namespace odyn::sim {

double length(Vec2 a) { return std::hypot(a.x, a.y); }

Vec2 rotate(Vec2 a, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * a.x - s * a.y, s * a.x + c * a.y};
}

double polygon_area(const std::vector<Vec2>& v) {
  double a = 0;
  for (std::size_t i = 0; i < v.size(); ++i) a += cross(v[i], v[(i + 1) % v.size()]);
  return 0.5 * a;
}

Vec2 polygon_centroid(const std::vector<Vec2>& v) {
  double cx = 0, cy = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 p = v[i], q = v[(i + 1) % v.size()];
    const double c = cross(p, q);
    cx += (p.x + q.x) * c;
    cy += (p.y + q.y) * c;
  }
  const double a6 = 6 * polygon_area(v);
  return {cx / a6, cy / a6};
}

double polygon_inertia(const std::vector<Vec2>& v, double mass) {
  // Triangle fan about the origin; v is centered on its centroid.
  double num = 0, den = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 p = v[i], q = v[(i + 1) % v.size()];
    const double c = std::abs(cross(p, q));
    num += c * (dot(p, p) + dot(p, q) + dot(q, q));
    den += c;
  }
  return mass * num / (6 * den);
}

bool is_convex_ccw(const std::vector<Vec2>& v) {
  if (v.size() < 3) return false;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i], b = v[(i + 1) % v.size()], c = v[(i + 2) % v.size()];
    if (cross(b - a, c - b) <= 0) return false;
  }
  return true;
}

bool point_in_polygon(Vec2 p, const std::vector<Vec2>& v) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (cross(v[(i + 1) % v.size()] - v[i], p - v[i]) < 0) return false;
  }
  return true;
}

SignedDistance signed_distance(Vec2 p, const std::vector<Vec2>& poly) {
  double best_plane = -std::numeric_limits<double>::infinity();
  Vec2 best_normal;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 e = poly[(i + 1) % poly.size()] - poly[i];
    const Vec2 n = (1.0 / length(e)) * Vec2{e.y, -e.x};
    const double d = dot(p - poly[i], n);
    if (d > best_plane) {
      best_plane = d;
      best_normal = n;
    }
  }
  if (best_plane <= 0) return {best_plane, best_normal};
  double best = std::numeric_limits<double>::infinity();
  Vec2 closest;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % poly.size()];
    const Vec2 ab = b - a;
    const double s = std::clamp(dot(p - a, ab) / dot(ab, ab), 0.0, 1.0);
    const Vec2 q = a + s * ab;
    const double d = length(p - q);
    if (d < best) {
      best = d;
      closest = q;
    }
  }
  return {best, (1.0 / best) * (p - closest)};
}

namespace {

bool separated_along_edges(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double margin) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2 e = a[(i + 1) % a.size()] - a[i];
    const Vec2 n = (1.0 / length(e)) * Vec2{e.y, -e.x};
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& p : b) lo = std::min(lo, dot(p - a[i], n));
    if (lo > margin) return true;
  }
  return false;
}

}  // namespace

bool polygons_overlap(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double margin) {
  return !separated_along_edges(a, b, margin) && !separated_along_edges(b, a, margin);
}

std::vector<Vec2> Body::world_vertices() const {
  std::vector<Vec2> out;
  out.reserve(local.size());
  for (const auto& v : local) out.push_back(position + rotate(v, angle));
  return out;
}

Body make_body(int shape_id, Vec2 position, double angle, double density) {
  const ShapeDef& def = shape(shape_id);
  Body b;
  b.shape_id = shape_id;
  b.position = position;
  b.angle = angle;
  b.local = def.vertices;
  b.height = def.height;
  b.mass = density * polygon_area(def.vertices);
  b.inertia = polygon_inertia(def.vertices, b.mass);
  for (const auto& v : b.local) b.radius = std::max(b.radius, length(v));
  return b;
}

namespace {

ShapeDef centered(int id, std::vector<Vec2> v, double height, std::array<double, 3> color) {
  const Vec2 c = polygon_centroid(v);
  for (auto& p : v) p = p - c;
  return {id, std::move(v), height, color};
}

}  // namespace

const std::vector<ShapeDef>& shape_library() {
  static const std::vector<ShapeDef> library = {
      centered(0, {{-0.30, -0.22}, {0.32, -0.18}, {0.25, 0.24}, {-0.28, 0.20}}, 0.30, {0.85, 0.20, 0.20}),
      centered(1, {{-0.34, -0.20}, {0.30, -0.26}, {0.36, 0.05}, {-0.05, 0.30}}, 0.42, {0.20, 0.70, 0.25}),
      centered(2, {{-0.25, -0.28}, {0.20, -0.30}, {0.34, 0.02}, {0.05, 0.30}, {-0.32, 0.10}}, 0.36,
               {0.20, 0.35, 0.85}),
      centered(3, {{-0.36, -0.24}, {0.38, -0.16}, {-0.06, 0.34}}, 0.25, {0.90, 0.80, 0.15}),
      centered(4, {{-0.20, -0.30}, {0.18, -0.28}, {0.33, -0.02}, {0.20, 0.26}, {-0.16, 0.30}, {-0.34, 0.02}},
               0.48, {0.70, 0.25, 0.75}),
      centered(5, {{-0.40, -0.14}, {0.40, -0.12}, {0.36, 0.16}, {-0.38, 0.12}}, 0.33, {0.15, 0.75, 0.75}),
      centered(6, {{0.00, -0.34}, {0.28, -0.04}, {0.06, 0.30}, {-0.22, 0.02}}, 0.40, {0.95, 0.55, 0.15}),
      centered(7, {{-0.30, -0.30}, {0.30, -0.22}, {0.30, 0.12}, {0.00, 0.32}, {-0.26, 0.16}}, 0.28,
               {0.45, 0.30, 0.15}),
  };
  return library;
}

const ShapeDef& shape(int id) {
  const auto& lib = shape_library();
  if (id < 0 || static_cast<std::size_t>(id) >= lib.size()) {
    throw std::out_of_range("unknown shape id " + std::to_string(id));
  }
  return lib[static_cast<std::size_t>(id)];
}

}  // namespace odyn::sim
