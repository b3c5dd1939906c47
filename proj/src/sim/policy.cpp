#include <cmath>
#include <limits>

#include "odyn/sim.hpp"

namespace odyn::sim {

Vec2 command_velocity(Command c, double speed) {
  switch (c) {
    case Command::left: return {-speed, 0};
    case Command::right: return {speed, 0};
    case Command::forward: return {0, speed};
    case Command::backward: return {0, -speed};
  }
  return {};
}

int choose_target(const WorldState& w, const std::vector<bool>& exclude) {
  const auto& objs = w.objects;
  if (objs.empty()) return -1;
  Vec2 centroid;
  for (const auto& o : objs) centroid = centroid + o.position;
  centroid = (1.0 / static_cast<double>(objs.size())) * centroid;
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < objs.size(); ++i) {
    if (i < exclude.size() && exclude[i]) continue;
    const double d = length(objs[i].position - centroid);
    // Strict comparison keeps the lowest id on ties.
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

namespace {

Command toward(Vec2 dir) {
  if (std::abs(dir.x) >= std::abs(dir.y)) return dir.x < 0 ? Command::left : Command::right;
  return dir.y < 0 ? Command::backward : Command::forward;
}

Vec2 unit_of(Command c) { return command_velocity(c, 1.0); }

}  // namespace

Command greedy_command(const WorldState& w, int target, double speed) {
  const auto& objs = w.objects;
  const auto& t = objs.at(static_cast<std::size_t>(target));
  Vec2 others;
  for (std::size_t i = 0; i < objs.size(); ++i) {
    if (static_cast<int>(i) != target) others = others + objs[i].position;
  }
  Vec2 away = objs.size() > 1 ? t.position - (1.0 / static_cast<double>(objs.size() - 1)) * others
                              : Vec2{t.position.x - 0.5 * w.container.width, t.position.y - 0.5 * w.container.height};
  if (away.x == 0 && away.y == 0) away = {1, 0};
  const Command push = toward(away);
  const Vec2 d = unit_of(push);
  const Vec2 side = perp(d);

  const Vec2 rel = w.pusher.position - t.position;
  const double along = dot(rel, d);     // negative: pusher is behind the target
  const double lateral = dot(rel, side);
  const double clearance = t.radius + w.pusher.radius;
  const double step = speed * w.params.dt;

  if (along < -0.5 * t.radius) {
    // Behind: align laterally, then push.
    if (std::abs(lateral) <= std::max(0.5 * step, 0.1)) return push;
    return toward(-lateral * side);
  }
  // Not behind yet: sidestep clear of the target before retreating past it.
  if (std::abs(lateral) < clearance + 0.05) {
    return toward((lateral >= 0 ? 1.0 : -1.0) * side);
  }
  return toward(-d);
}

Vec2 ScriptedPolicy::act(const WorldState& w, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 3);
  const double coin = unit(rng);
  const auto random_command = static_cast<Command>(pick(rng));
  if (w.objects.empty()) return command_velocity(random_command, config_.speed);

  if (singulated_.size() != w.objects.size()) singulated_.assign(w.objects.size(), false);
  if (target_ < 0) target_ = choose_target(w);
  double nearest = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < w.objects.size(); ++i) {
    if (static_cast<int>(i) == target_) continue;
    nearest = std::min(nearest, length(w.objects[i].position - w.objects[static_cast<std::size_t>(target_)].position));
  }
  if (nearest > config_.separation_target) {
    singulated_[static_cast<std::size_t>(target_)] = true;
    const int next = choose_target(w, singulated_);
    if (next >= 0) target_ = next;
  }

  if (coin < config_.epsilon) return command_velocity(random_command, config_.speed);
  return command_velocity(greedy_command(w, target_, config_.speed), config_.speed);
}

}  // namespace odyn::sim
