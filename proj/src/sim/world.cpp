#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "odyn/sim.hpp"

namespace odyn::sim {

namespace {

constexpr int wall = -1;

/// Solver view of one body; the pusher is the last entry and never rotates.
struct Dyn {
  Vec2 x;
  double a = 0;
  Vec2 v;
  double w = 0;
  double inv_m = 0, inv_i = 0;
  double radius = 0;
};

/// n points from body a to body b; s is the gap (negative when overlapping).
struct Contact {
  int a = wall, b = wall;
  Vec2 point, n;
  double s = 0;
  Vec2 ra, rb;
  double kn = 0, kt = 0;
  double ln = 0, lt = 0;
  double vn0 = 0;
};

struct Geometry {
  std::vector<std::vector<Vec2>> polys;
  Vec2 pusher;
  double pusher_radius = 0;
};

Geometry geometry(const WorldState& w, const std::vector<Dyn>& d) {
  Geometry g;
  const std::size_t n = w.objects.size();
  g.polys.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.polys[i].reserve(w.objects[i].local.size());
    for (const auto& v : w.objects[i].local) g.polys[i].push_back(d[i].x + rotate(v, d[i].a));
  }
  g.pusher = d[n].x;
  g.pusher_radius = w.pusher.radius;
  return g;
}

double sweep(const Dyn& d) { return length(d.v) + std::abs(d.w) * d.radius; }

struct ManifoldPoint {
  Vec2 point, normal;  // normal from the first polygon to the second
  double separation = 0;
};

/// Largest separation of `b` from the faces of `a` and the face attaining it.
std::pair<double, std::size_t> max_separation(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t face = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec2 e = a[(i + 1) % a.size()] - a[i];
    const Vec2 n = (1.0 / length(e)) * Vec2{e.y, -e.x};
    double lo = std::numeric_limits<double>::infinity();
    for (const auto& p : b) lo = std::min(lo, dot(p - a[i], n));
    if (lo > best) {
      best = lo;
      face = i;
    }
  }
  return {best, face};
}

/// Reference-face / incident-edge clipping: up to two points sharing one
/// normal, each with its own separation along that normal.
std::vector<ManifoldPoint> collide_polygons(const std::vector<Vec2>& a, const std::vector<Vec2>& b, double margin) {
  const auto [sep_a, face_a] = max_separation(a, b);
  if (sep_a > margin) return {};
  const auto [sep_b, face_b] = max_separation(b, a);
  if (sep_b > margin) return {};
  const bool flip = sep_b > sep_a + 1e-4;
  const auto& ref = flip ? b : a;
  const auto& inc = flip ? a : b;
  const std::size_t face = flip ? face_b : face_a;

  const Vec2 v1 = ref[face], v2 = ref[(face + 1) % ref.size()];
  const Vec2 t = (1.0 / length(v2 - v1)) * (v2 - v1);
  const Vec2 n{t.y, -t.x};
  std::size_t inc_face = 0;
  double most_opposed = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < inc.size(); ++i) {
    const Vec2 e = inc[(i + 1) % inc.size()] - inc[i];
    const double d = dot((1.0 / length(e)) * Vec2{e.y, -e.x}, n);
    if (d < most_opposed) {
      most_opposed = d;
      inc_face = i;
    }
  }
  std::vector<Vec2> seg{inc[inc_face], inc[(inc_face + 1) % inc.size()]};
  // Clip against the side planes dot(t, p) >= dot(t, v1) and dot(t, p) <= dot(t, v2).
  auto clip = [](const std::vector<Vec2>& in, Vec2 dir, double offset) {
    std::vector<Vec2> out;
    const double d0 = dot(dir, in[0]) - offset, d1 = dot(dir, in[1]) - offset;
    if (d0 <= 0) out.push_back(in[0]);
    if (d1 <= 0) out.push_back(in[1]);
    if (d0 * d1 < 0) out.push_back(in[0] + (d0 / (d0 - d1)) * (in[1] - in[0]));
    return out;
  };
  seg = clip(seg, -t, -dot(t, v1));
  if (seg.size() < 2) return {};
  seg = clip(seg, t, dot(t, v2));
  if (seg.size() < 2) return {};
  std::vector<ManifoldPoint> out;
  for (const auto& p : seg) {
    const double s = dot(p - v1, n);
    if (s <= margin) out.push_back({p, flip ? -n : n, s});
  }
  return out;
}

/// Contacts ordered pusher, object pairs, walls: the static walls are
/// solved last so they win any conflict within an iteration.
std::vector<Contact> find_contacts(const WorldState& w, const std::vector<Dyn>& d, bool speculative) {
  const Geometry g = geometry(w, d);
  const std::size_t n = w.objects.size();
  const int pusher = static_cast<int>(n);
  const double dt = w.params.dt;
  auto margin = [&](int a, int b) {
    if (!speculative) return 0.0;
    double m = 0.02;
    if (a != wall) m += sweep(d[static_cast<std::size_t>(a)]) * dt;
    if (b != wall) m += sweep(d[static_cast<std::size_t>(b)]) * dt;
    return m;
  };
  std::vector<Contact> out;
  auto add = [&](int a, int b, Vec2 point, Vec2 normal, double s) {
    Contact c;
    c.a = a;
    c.b = b;
    c.point = point;
    c.n = normal;
    c.s = s;
    out.push_back(c);
  };

  for (std::size_t i = 0; i < n; ++i) {
    const int ia = static_cast<int>(i);
    const double m = margin(ia, pusher);
    if (length(g.pusher - d[i].x) > d[i].radius + g.pusher_radius + m) continue;
    const auto sd = signed_distance(g.pusher, g.polys[i]);
    const double s = sd.distance - g.pusher_radius;
    if (s < m) add(ia, pusher, g.pusher - g.pusher_radius * sd.normal, sd.normal, s);
  }

  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const int ia = static_cast<int>(i), jb = static_cast<int>(j);
      const double m = margin(ia, jb);
      if (length(d[j].x - d[i].x) > d[i].radius + d[j].radius + m) continue;
      for (const auto& m_pt : collide_polygons(g.polys[i], g.polys[j], m)) add(ia, jb, m_pt.point, m_pt.normal, m_pt.separation);
    }
  }

  const double W = w.container.width, H = w.container.height;
  auto walls = [&](int b, Vec2 p, double inset) {
    const double m = margin(wall, b);
    const struct {
      double s;
      Vec2 n;
    } planes[] = {{p.x - inset, {1, 0}}, {W - p.x - inset, {-1, 0}}, {p.y - inset, {0, 1}}, {H - p.y - inset, {0, -1}}};
    for (const auto& pl : planes) {
      if (pl.s < m) add(wall, b, p - inset * pl.n, pl.n, pl.s);
    }
  };
  walls(pusher, g.pusher, g.pusher_radius);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& p : g.polys[i]) walls(static_cast<int>(i), p, 0);
  }
  return out;
}

Vec2 velocity_at(const std::vector<Dyn>& d, int body, Vec2 r) {
  if (body == wall) return {};
  const auto& b = d[static_cast<std::size_t>(body)];
  return b.v + cross(b.w, r);
}

void apply_impulse(std::vector<Dyn>& d, int body, Vec2 r, Vec2 p) {
  if (body == wall) return;
  auto& b = d[static_cast<std::size_t>(body)];
  b.v = b.v + b.inv_m * p;
  b.w += b.inv_i * cross(r, p);
}

double effective_mass_inverse(const std::vector<Dyn>& d, const Contact& c, Vec2 dir) {
  double k = 0;
  if (c.a != wall) {
    const auto& a = d[static_cast<std::size_t>(c.a)];
    const double rn = cross(c.ra, dir);
    k += a.inv_m + a.inv_i * rn * rn;
  }
  if (c.b != wall) {
    const auto& b = d[static_cast<std::size_t>(c.b)];
    const double rn = cross(c.rb, dir);
    k += b.inv_m + b.inv_i * rn * rn;
  }
  return k;
}

void prepare(std::vector<Contact>& contacts, const std::vector<Dyn>& d) {
  for (auto& c : contacts) {
    c.ra = c.a == wall ? Vec2{} : c.point - d[static_cast<std::size_t>(c.a)].x;
    c.rb = c.b == wall ? Vec2{} : c.point - d[static_cast<std::size_t>(c.b)].x;
    c.kn = effective_mass_inverse(d, c, c.n);
    c.kt = effective_mass_inverse(d, c, perp(c.n));
    c.vn0 = dot(velocity_at(d, c.b, c.rb) - velocity_at(d, c.a, c.ra), c.n);
  }
}

void solve_velocities(std::vector<Contact>& contacts, std::vector<Dyn>& d, const PhysicsParams& p) {
  for (int it = 0; it < p.velocity_iterations; ++it) {
    for (auto& c : contacts) {
      if (c.kn <= 0) continue;
      const Vec2 dv = velocity_at(d, c.b, c.rb) - velocity_at(d, c.a, c.ra);
      const double vn = dot(dv, c.n);
      // Speculative gap: approach may close the gap within this step.
      double target = c.s > 0 ? -c.s / p.dt : 0.0;
      if (p.restitution > 0 && c.s <= 0.005 && c.vn0 < -1e-2) target = std::max(target, -p.restitution * c.vn0);
      const double next = std::max(c.ln + (target - vn) / c.kn, 0.0);
      const Vec2 impulse = (next - c.ln) * c.n;
      c.ln = next;
      apply_impulse(d, c.a, c.ra, -impulse);
      apply_impulse(d, c.b, c.rb, impulse);

      if (c.kt <= 0 || p.friction <= 0) continue;
      const Vec2 t = perp(c.n);
      const Vec2 dv2 = velocity_at(d, c.b, c.rb) - velocity_at(d, c.a, c.ra);
      const double bound = p.friction * c.ln;
      const double lt = std::clamp(c.lt - dot(dv2, t) / c.kt, -bound, bound);
      const Vec2 ti = (lt - c.lt) * t;
      c.lt = lt;
      apply_impulse(d, c.a, c.ra, -ti);
      apply_impulse(d, c.b, c.rb, ti);
    }
  }
}

double deepest(const std::vector<Contact>& contacts) {
  double pen = 0;
  for (const auto& c : contacts) pen = std::max(pen, -c.s);
  return pen;
}

void solve_positions(const WorldState& w, std::vector<Dyn>& d) {
  const auto& p = w.params;
  const double slop = 0.2 * p.penetration_tolerance;
  for (int it = 0; it < p.position_iterations; ++it) {
    auto contacts = find_contacts(w, d, false);
    if (deepest(contacts) <= 0.5 * p.penetration_tolerance) return;
    prepare(contacts, d);
    std::vector<Dyn> start = d;
    for (auto& c : contacts) {
      if (c.kn <= 0) continue;
      // Current gap from the motion applied so far in this sweep.
      auto moved = [&](int body, Vec2 r) -> Vec2 {
        if (body == wall) return {};
        const auto& now = d[static_cast<std::size_t>(body)];
        const auto& was = start[static_cast<std::size_t>(body)];
        return (now.x - was.x) + cross(now.a - was.a, r);
      };
      const double s = c.s + dot(moved(c.b, c.rb) - moved(c.a, c.ra), c.n);
      const double C = std::min(0.0, s + slop);
      if (C >= 0) continue;
      const double lambda = std::min(-0.8 * C / c.kn, 0.05 / c.kn);
      const Vec2 P = lambda * c.n;
      if (c.a != wall) {
        auto& a = d[static_cast<std::size_t>(c.a)];
        a.x = a.x - a.inv_m * P;
        a.a -= a.inv_i * cross(c.ra, P);
      }
      if (c.b != wall) {
        auto& b = d[static_cast<std::size_t>(c.b)];
        b.x = b.x + b.inv_m * P;
        b.a += b.inv_i * cross(c.rb, P);
      }
    }
  }
}

bool finite(Vec2 v) { return std::isfinite(v.x) && std::isfinite(v.y); }

struct Outcome {
  std::vector<Dyn> d;
  double pusher_mass = 0;
  double correction = 0;  // largest object displacement made by position correction
  double residual = 0;    // deepest penetration left after correction

  bool fits(const PhysicsParams& p) const {
    return correction <= p.correction_budget && residual <= p.penetration_tolerance;
  }
  bool better_than(const Outcome& o, const PhysicsParams& p) const {
    const bool deep = residual > p.penetration_tolerance, o_deep = o.residual > p.penetration_tolerance;
    if (deep != o_deep) return o_deep;
    return deep ? residual < o.residual : correction < o.correction;
  }
};

Outcome advance(const WorldState& w, Vec2 action) {
  const auto& p = w.params;
  const std::size_t n = w.objects.size();
  double heaviest = 0;
  for (const auto& o : w.objects) heaviest = std::max(heaviest, o.mass);
  const double pusher_mass = heaviest > 0 ? p.pusher_mass_ratio * heaviest : w.pusher.mass;

  std::vector<Dyn> d(n + 1);
  const double lin = std::exp(-p.linear_damping * p.dt);
  const double ang = std::exp(-p.angular_damping * p.dt);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& o = w.objects[i];
    d[i] = Dyn{o.position, o.angle, lin * o.velocity, ang * o.angular_velocity, 1 / o.mass, 1 / o.inertia, o.radius};
  }
  d[n] = Dyn{w.pusher.position, 0, action, 0, 1 / pusher_mass, 0, w.pusher.radius};

  auto contacts = find_contacts(w, d, true);
  prepare(contacts, d);
  solve_velocities(contacts, d, p);

  for (auto& b : d) {
    const double speed = length(b.v);
    if (speed > p.v_max) b.v = (p.v_max / speed) * b.v;
    b.w = std::clamp(b.w, -p.w_max, p.w_max);
  }
  const std::vector<Dyn> start = d;
  auto integrate = [&] {
    for (std::size_t i = 0; i < d.size(); ++i) {
      d[i].x = start[i].x + p.dt * d[i].v;
      d[i].a = start[i].a + p.dt * d[i].w;
    }
  };
  integrate();
  // Overlap at the predicted pose (linearized contacts miss rotation) is
  // removed by velocity impulses, so displacement stays v * dt.
  for (int pass = 0; pass < p.predicted_passes; ++pass) {
    auto predicted = find_contacts(w, d, false);
    if (deepest(predicted) <= 0.5 * p.penetration_tolerance) break;
    prepare(predicted, d);
    for (auto& c : predicted) c.s = std::min(0.0, c.s + 0.2 * p.penetration_tolerance);
    for (int it = 0; it < p.velocity_iterations; ++it) {
      for (auto& c : predicted) {
        if (c.kn <= 0 || c.s >= 0) continue;
        const double vn = dot(velocity_at(d, c.b, c.rb) - velocity_at(d, c.a, c.ra), c.n) - c.vn0;
        const double next = std::max(c.ln + (-c.s / p.dt - vn) / c.kn, 0.0);
        const Vec2 impulse = (next - c.ln) * c.n;
        c.ln = next;
        apply_impulse(d, c.a, c.ra, -impulse);
        apply_impulse(d, c.b, c.rb, impulse);
      }
    }
    integrate();
  }
  const std::vector<Dyn> integrated = d;
  solve_positions(w, d);
  double correction = 0;
  for (std::size_t i = 0; i < n; ++i) correction = std::max(correction, length(d[i].x - integrated[i].x));
  const double residual = deepest(find_contacts(w, d, false));
  return {std::move(d), pusher_mass, correction, residual};
}

}  // namespace

WorldState step(const WorldState& w, Vec2 action) {
  const auto& p = w.params;
  if (!finite(action) || length(action) > p.v_max + 1e-12) {
    throw std::invalid_argument("step: action magnitude exceeds v_max");
  }
  // A pusher that would squeeze objects past what the solver can absorb
  // stalls: the commanded velocity is scaled down until it fits.
  Outcome best = advance(w, action);
  for (double scale = 0.5; !best.fits(p) && scale > 1e-3; scale *= 0.5) {
    Outcome o = advance(w, scale * action);
    if (o.better_than(best, p)) best = std::move(o);
  }
  if (!best.fits(p)) {
    Outcome o = advance(w, {});
    if (o.better_than(best, p)) best = std::move(o);
  }
  const std::size_t n = w.objects.size();
  auto& d = best.d;
  const double pusher_mass = best.pusher_mass;

  WorldState next = w;
  next.t = w.t + 1;
  for (std::size_t i = 0; i < n; ++i) {
    auto& o = next.objects[i];
    o.position = d[i].x;
    o.angle = d[i].a;
    o.velocity = d[i].v;
    o.angular_velocity = d[i].w;
    if (!finite(o.position) || !finite(o.velocity) || !std::isfinite(o.angle) || !std::isfinite(o.angular_velocity)) {
      throw SimError("step " + std::to_string(next.t) + ": object " + std::to_string(i) + " state is not finite");
    }
  }
  next.pusher.position = d[n].x;
  next.pusher.velocity = d[n].v;
  next.pusher.mass = pusher_mass;
  if (!finite(next.pusher.position) || !finite(next.pusher.velocity)) {
    throw SimError("step " + std::to_string(next.t) + ": pusher state is not finite");
  }
  return next;
}

double max_object_penetration(const WorldState& w) {
  double pen = 0;
  std::vector<std::vector<Vec2>> polys;
  for (const auto& o : w.objects) polys.push_back(o.world_vertices());
  for (std::size_t i = 0; i < polys.size(); ++i) {
    for (std::size_t j = i + 1; j < polys.size(); ++j) {
      if (!polygons_overlap(polys[i], polys[j])) continue;
      // Minimum translation distance over the separating-axis candidates.
      double mtd = std::numeric_limits<double>::infinity();
      for (const auto* pair : {&polys[i], &polys[j]}) {
        const auto& a = *pair;
        const auto& b = pair == &polys[i] ? polys[j] : polys[i];
        for (std::size_t k = 0; k < a.size(); ++k) {
          const Vec2 e = a[(k + 1) % a.size()] - a[k];
          const Vec2 nrm = (1.0 / length(e)) * Vec2{e.y, -e.x};
          double lo_a = std::numeric_limits<double>::infinity(), hi_a = -lo_a;
          double lo_b = lo_a, hi_b = -lo_a;
          for (const auto& q : a) {
            lo_a = std::min(lo_a, dot(q, nrm));
            hi_a = std::max(hi_a, dot(q, nrm));
          }
          for (const auto& q : b) {
            lo_b = std::min(lo_b, dot(q, nrm));
            hi_b = std::max(hi_b, dot(q, nrm));
          }
          mtd = std::min(mtd, std::min(hi_a - lo_b, hi_b - lo_a));
        }
      }
      pen = std::max(pen, mtd);
    }
  }
  return pen;
}

double max_wall_penetration(const WorldState& w) {
  double pen = 0;
  for (const auto& o : w.objects) {
    for (const auto& p : o.world_vertices()) {
      pen = std::max({pen, -p.x, p.x - w.container.width, -p.y, p.y - w.container.height});
    }
  }
  return pen;
}

}  // namespace odyn::sim
