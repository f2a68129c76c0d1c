#include "vapor/collect.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace vapor {

namespace {

constexpr double kWallHalfLength = 9.5;

class Wanderer {
 public:
  Wanderer(const WorldModel& world, const WandererParams& params, const DynamicsParams& dynamics, std::uint64_t seed)
      : world_(world), p_(params), dynamics_(dynamics), limits_(dynamics.limits), rng_(seed) {}

  // Falls back to backing away from solids, then to stopping, when the wanted command
  // would lead into contact even with braking afterwards.
  Action act(const RobotState& robot) {
    const Action wanted = propose(robot);
    if (safe(robot, wanted)) return wanted;
    hold_ = 0;
    const double c = std::cos(robot.pose.theta), s = std::sin(robot.pose.theta);
    Vec2 away = repulsion(robot.pose.position());
    if (away.norm() > 1e-9) {
      away = 0.3 * away.normalized();
      const Action back(c * away.x() + s * away.y(), -s * away.x() + c * away.y(), 0.0);
      if (safe(robot, back)) return back;
    }
    return Action::Zero();
  }

 private:
  bool safe(const RobotState& robot, const Action& a) const {
    RobotState sim = robot;
    for (int k = 0; k < 12; ++k) {
      const StepResult r = step(world_, sim, k < 3 ? a : Action::Zero(), dynamics_);
      if (r.collision) return false;
      sim = r.state;
    }
    return true;
  }

  Action propose(const RobotState& robot) {
    const Vec2 pos = robot.pose.position();
    while (route_.empty() || (route_.front().point - pos).norm() < route_.front().tolerance) {
      if (!route_.empty()) route_.pop_front();
      if (route_.empty()) plan_leg(pos);
    }
    if (hold_ > 0) {
      --hold_;
      return held_;
    }
    if (uniform(rng_, 0.0, 1.0) < p_.explore_rate) {
      hold_ = std::uniform_int_distribution<int>(5, 15)(rng_);
      held_ = random_command();
      return held_;
    }

    const double c = std::cos(robot.pose.theta), s = std::sin(robot.pose.theta);
    auto to_body = [&](const Vec2& v) { return Vec2(c * v.x() + s * v.y(), -s * v.x() + c * v.y()); };
    const bool threading = in_passage(pos) || route_.front().tolerance < 0.5;
    Vec2 dir = to_body((route_.front().point - pos).normalized());
    if (!threading) dir += to_body(repulsion(pos));
    if (dir.norm() > 1e-9) dir.normalize();

    const double gain = threading ? 0.1 : 1.0;
    const double speed = threading ? std::min(speed_, 0.4) : speed_;
    for (double& n : noise_) n = 0.85 * n + p_.noise * std::sqrt(1.0 - 0.85 * 0.85) * gaussian(rng_);
    Action a = Action::Zero();
    if (holonomic_) {
      a.x() = speed * dir.x() + gain * noise_[0];
      a.y() = speed * dir.y() + gain * noise_[1];
    } else {
      const double err = std::atan2(dir.y(), dir.x());
      a.z() = std::clamp(1.5 * err, -limits_.omega_max, limits_.omega_max) + gain * noise_[2];
      a.x() = speed * std::max(0.0, std::cos(err)) + gain * noise_[0];
    }
    a.x() = std::clamp(a.x(), -limits_.v_max, limits_.v_max);
    a.y() = std::clamp(a.y(), -limits_.v_max, limits_.v_max);
    a.z() = std::clamp(a.z(), -limits_.omega_max, limits_.omega_max);
    return a;
  }

  void plan_leg(const Vec2& pos) {
    const Bounds& b = world_.bounds;
    const bool to_goal = uniform(rng_, 0.0, 1.0) < p_.goal_share && (world_.mission.goal - pos).norm() >= 0.6;
    Vec2 target = to_goal ? world_.mission.goal
                          : Vec2(uniform(rng_, b.min.x() + 1.0, b.max.x() - 1.0), uniform(rng_, b.min.y() + 1.0, b.max.y() - 1.0));
    for (const Corridor& cor : world_.corridors) {
      const Vec2 u = (cor.b - cor.a).normalized();
      const Vec2 mid = 0.5 * (cor.a + cor.b);
      const double sp = (pos - mid).dot(u), st = (target - mid).dot(u);
      if (sp * st >= 0.0) continue;
      // Where the straight leg would cross the wall line.
      const Vec2 cross = pos + (target - pos) * (sp / (sp - st));
      const Vec2 n(-u.y(), u.x());
      if (std::abs((cross - mid).dot(n)) > kWallHalfLength) continue;
      const double side = sp < 0.0 ? -1.0 : 1.0;
      const double half = 0.5 * (cor.b - cor.a).norm();
      route_.push_back({mid + side * (half + 2.5) * u, 0.3});
      route_.push_back({mid + side * (half + 0.5) * u, 0.1});
      route_.push_back({mid - side * (half + 1.0) * u, 0.3});
    }
    route_.push_back({target, 0.6});
    holonomic_ = uniform(rng_, 0.0, 1.0) < p_.holonomic_share;
    speed_ = uniform(rng_, p_.min_speed, p_.max_speed);
  }

  bool in_passage(const Vec2& pos) const {
    for (const Corridor& cor : world_.corridors) {
      if (cor.contains(pos, 0.5)) return true;
    }
    return false;
  }

  Vec2 repulsion(const Vec2& pos) const {
    Vec2 push = Vec2::Zero();
    for (const Entity& e : world_.entities) {
      if (!world_.materials[e.kind].solid()) continue;
      const Vec2 d = pos - e.center;
      const double clearance = d.norm() - e.radius - 0.3;
      if (clearance < p_.avoid_distance) push += d.normalized() * (p_.avoid_distance - clearance) / p_.avoid_distance * 2.0;
    }
    return push;
  }

  Action random_command() {
    Action a = Action::Zero();
    a.x() = uniform(rng_, -limits_.v_max, limits_.v_max);
    if (uniform(rng_, 0.0, 1.0) < 0.5) {
      a.y() = uniform(rng_, -limits_.v_max, limits_.v_max);
    } else {
      a.z() = uniform(rng_, -limits_.omega_max, limits_.omega_max);
    }
    return a;
  }

  const WorldModel& world_;
  WandererParams p_;
  DynamicsParams dynamics_;
  VelocityLimits limits_;
  Rng rng_;
  struct Waypoint {
    Vec2 point;
    double tolerance;
  };
  std::deque<Waypoint> route_;
  bool holonomic_ = false;
  double speed_ = 0.5;
  int hold_ = 0;
  Action held_ = Action::Zero();
  std::array<double, 3> noise_{};
};

}  // namespace

WorldModel collection_world(std::uint64_t episode, const CollectParams& params) {
  WorldParams wp;
  wp.archetype = params.archetypes.at(episode % params.archetypes.size());
  wp.seed = mix_seed(params.seed, episode);
  wp.bounds = params.bounds;
  wp.robot_radius = params.dynamics.robot_radius;
  return generate_world(wp);
}

Rollout collect_episode(std::uint64_t episode, const CollectParams& params) {
  const WorldModel world = collection_world(episode, params);
  Rollout out;
  out.episode = episode;
  out.world_seed = world.seed;
  out.archetype = world.archetype;

  Wanderer wanderer(world, params.wanderer, params.dynamics, mix_seed(world.seed, 77));
  RobotState robot;
  robot.pose = world.mission.start;
  robot.battery_current = params.dynamics.idle_current;
  for (int k = 0;; ++k) {
    StepRecord rec;
    rec.t = robot.time;
    rec.pose = robot.pose;
    rec.velocity = robot.velocity;
    rec.entanglement = robot.entanglement;
    SensorFrame frame = sense(world, robot, params.sensing, sensing_seed(world.seed, static_cast<std::uint64_t>(k)));
    rec.cloud = std::move(frame.cloud);
    rec.proprio = std::move(frame.proprio);
    if (k >= params.wanderer.max_steps) {
      rec.current = robot.battery_current;
      out.steps.push_back(std::move(rec));
      break;
    }
    const Action wanted = wanderer.act(robot);
    const StepResult r = step(world, robot, wanted, params.dynamics);
    rec.has_action = true;
    rec.action = r.state.velocity;
    rec.current = r.state.battery_current;
    rec.flags = {r.collision, r.immobilized, r.clamped};
    out.steps.push_back(std::move(rec));
    robot = r.state;
    if (r.collision || r.immobilized) {
      StepRecord last;
      last.t = robot.time;
      last.pose = robot.pose;
      last.velocity = robot.velocity;
      last.entanglement = robot.entanglement;
      last.current = robot.battery_current;
      SensorFrame f = sense(world, robot, params.sensing, sensing_seed(world.seed, static_cast<std::uint64_t>(k + 1)));
      last.cloud = std::move(f.cloud);
      last.proprio = std::move(f.proprio);
      out.steps.push_back(std::move(last));
      break;
    }
  }
  return out;
}

}  // namespace vapor
