#include "vapor/planner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "vapor/collect.hpp"
#include "vapor/dataset.hpp"

namespace vapor::plan {

std::string_view to_string(Mode m) { return m == Mode::Holonomic ? "holonomic" : "nonholonomic"; }

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Collision: return "collision";
    case Outcome::Immobilized: return "immobilized";
    case Outcome::Timeout: return "timeout";
  }
  return "timeout";
}

void ContextConfig::validate() const {
  if (!(band_lo < band_hi)) throw std::invalid_argument("intensity band is empty");
  if (!(phi > 0.0 && phi < 1.0)) throw std::invalid_argument("phi must lie in (0, 1)");
  if (!(gamma >= 0.0)) throw std::invalid_argument("gamma must be non-negative");
  if (!(radius > 0.0)) throw std::invalid_argument("context radius must be positive");
  if (hysteresis < 1) throw std::invalid_argument("hysteresis must be at least one step");
}

double band_fraction(const Eigen::MatrixXd& intensity, const GridSpec& grid, const ContextConfig& cfg) {
  int nonzero = 0, in_band = 0;
  for (const auto& [l, m] : neighborhood(grid, cfg.radius)) {
    const double v = intensity(l, m);
    if (v <= 0.0) continue;
    ++nonzero;
    if (v >= cfg.band_lo && v <= cfg.band_hi) ++in_band;
  }
  return nonzero == 0 ? 0.0 : static_cast<double>(in_band) / nonzero;
}

bool condition_c(const StabilityVector& sp, const Eigen::MatrixXd& intensity, const GridSpec& grid,
                 const ContextConfig& cfg) {
  return sp.norm() > cfg.gamma && band_fraction(intensity, grid, cfg) >= cfg.phi;
}

namespace {

std::vector<double> axis(double current, double rate, double bound, int k) {
  const double lo = std::max(current - rate, -bound);
  const double hi = std::min(current + rate, bound);
  const bool clipped = lo != current - rate || hi != current + rate;
  const double c = clipped ? 0.5 * (lo + hi) : current;
  const int h = k / 2;
  std::vector<double> out(static_cast<std::size_t>(k));
  for (int i = 0; i < h; ++i) out[static_cast<std::size_t>(i)] = lo + (c - lo) * i / h;
  out[static_cast<std::size_t>(h)] = c;
  for (int i = h + 1; i < k; ++i) out[static_cast<std::size_t>(i)] = c + (hi - c) * (i - h) / h;
  out.back() = hi;
  return out;
}

double toward_zero(double current, double rate) {
  if (std::abs(current) <= rate) return 0.0;
  return current > 0.0 ? current - rate : current + rate;
}

}  // namespace

std::vector<VelocitySample> reachable_set(const Action& current, const VelocityLimits& limits, Mode mode, int k) {
  if (k < 3 || k % 2 == 0) throw std::invalid_argument("lattice size must be odd and at least 3");
  const double dv = limits.accel_max * limits.dt, dw = limits.omega_accel_max * limits.dt;
  const auto vx = axis(current.x(), dv, limits.v_max, k);
  std::vector<VelocitySample> out;
  out.reserve(static_cast<std::size_t>(k * k));
  if (mode == Mode::Holonomic) {
    const double w = toward_zero(current.z(), dw);
    if (w != 0.0) {
      for (double x : vx) out.push_back({Action(x, 0.0, w), 0.0, Mode::Nonholonomic});
      return out;
    }
    for (double x : vx) {
      for (double y : axis(current.y(), dv, limits.v_max, k)) out.push_back({Action(x, y, 0.0), 0.0, Mode::Holonomic});
    }
  } else {
    const double vy = toward_zero(current.y(), dv);
    if (vy != 0.0) {
      for (double x : vx) out.push_back({Action(x, vy, 0.0), 0.0, Mode::Holonomic});
      return out;
    }
    for (double x : vx) {
      for (double w : axis(current.z(), dw, limits.omega_max, k)) out.push_back({Action(x, 0.0, w), 0.0, Mode::Nonholonomic});
    }
  }
  return out;
}

std::size_t best_sample(std::span<const VelocitySample> samples) {
  if (samples.empty()) throw std::invalid_argument("no samples to choose from");
  auto better = [](const VelocitySample& a, const VelocitySample& b) {
    if (a.q != b.q) return a.q > b.q;
    const double na = a.a.squaredNorm(), nb = b.a.squaredNorm();
    if (na != nb) return na < nb;
    return std::lexicographical_compare(a.a.data(), a.a.data() + 3, b.a.data(), b.a.data() + 3);
  };
  std::size_t best = 0;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    if (better(samples[i], samples[best])) best = i;
  }
  return best;
}

void CriticScorer::score(const Observation& obs, std::span<VelocitySample> samples) {
  const nn::NetworkConfig& cfg = critic_.config();
  nn::StateBatch<float> s;
  s.extero = nn::pool_maps<float>(obs.maps, cfg);
  s.proprio = zero_proprio_ ? ad::Matrix<float>::Zero(1, 2) : ad::Matrix<float>(nn::proprio_features<float>(obs.stability));
  ad::Matrix<float> actions(static_cast<Eigen::Index>(samples.size()), 3);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    for (int c = 0; c < 3; ++c) actions(static_cast<Eigen::Index>(i), c) = static_cast<float>(samples[i].a[c]);
  }
  ad::Tape<float> t;
  const ad::Matrix<float> q = critic_.forward(t, s, t.constant(std::move(actions)), false).value();
  for (std::size_t i = 0; i < samples.size(); ++i) samples[i].q = q(static_cast<Eigen::Index>(i), 0);
}

ContextPlanner::ContextPlanner(ActionScorer& scorer, const PlannerParams& params, bool ignore_context)
    : scorer_(scorer), params_(params), ignore_context_(ignore_context) {
  params.context.validate();
}

void ContextPlanner::reset() {
  mode_ = Mode::Nonholonomic;
  pending_ = 0;
}

Decision ContextPlanner::decide(const StepContext& ctx) {
  Decision d;
  d.condition = !ignore_context_ &&
                condition_c(ctx.obs.stability, ctx.obs.maps.intensity, ctx.obs.maps.grid, params_.context);
  const Mode wanted = d.condition ? Mode::Holonomic : Mode::Nonholonomic;
  if (wanted != mode_) {
    if (++pending_ >= params_.context.hysteresis) {
      mode_ = wanted;
      pending_ = 0;
    }
  } else {
    pending_ = 0;
  }
  d.mode = mode_;
  d.lattice = reachable_set(ctx.robot.velocity, ctx.limits, mode_, params_.lattice);
  scorer_.score(ctx.obs, d.lattice);
  d.chosen = d.lattice[best_sample(d.lattice)];
  return d;
}

Decision StraightToGoal::decide(const StepContext& ctx) {
  Decision d;
  d.lattice = reachable_set(ctx.robot.velocity, ctx.limits, Mode::Nonholonomic, lattice_);
  for (VelocitySample& s : d.lattice) {
    Vec2 p = Vec2::Zero();
    double th = 0.0;
    for (int i = 0; i < 10; ++i) {
      p += 0.1 * Vec2(std::cos(th) * s.a.x() - std::sin(th) * s.a.y(), std::sin(th) * s.a.x() + std::cos(th) * s.a.y());
      th += 0.1 * s.a.z();
    }
    s.q = -(ctx.goal_robot - p).norm();
  }
  d.chosen = d.lattice[best_sample(d.lattice)];
  return d;
}

Decision RandomFeasible::decide(const StepContext& ctx) {
  if (uniform(rng_, 0.0, 1.0) < 0.05) mode_ = mode_ == Mode::Holonomic ? Mode::Nonholonomic : Mode::Holonomic;
  Decision d;
  d.mode = mode_;
  d.lattice = reachable_set(ctx.robot.velocity, ctx.limits, mode_, lattice_);
  d.chosen = d.lattice[std::uniform_int_distribution<std::size_t>(0, d.lattice.size() - 1)(rng_)];
  return d;
}

EpisodeResult run_episode(const WorldModel& world, const Pose2& start, const Vec2& goal, Policy& policy,
                          const EpisodeParams& params, std::uint64_t seed, const DecisionHook& hook) {
  if (!world.bounds.contains(goal)) throw std::invalid_argument("goal lies outside the world");
  EpisodeResult out;
  RobotState robot;
  robot.pose = start;
  robot.battery_current = params.dynamics.idle_current;
  const double d_tot = (goal - start.position()).norm();
  out.straight_distance = d_tot;
  policy.reset();
  if (d_tot <= params.goal_threshold) {
    out.outcome = Outcome::Success;
    return out;
  }
  for (int k = 0; k < params.budget; ++k) {
    const SensorFrame frame = sense(world, robot, params.sensing, sensing_seed(seed, static_cast<std::uint64_t>(k)));
    const Observation obs = observe(frame, robot.pose, goal, d_tot, params.sensing.percept);
    const Decision d = policy.decide({obs, robot, to_robot_frame(robot.pose, goal), params.dynamics.limits});
    if (hook) hook(k, robot, d);
    const StepResult r = step(world, robot, d.chosen.a, params.dynamics);
    out.path_length += (r.state.pose.position() - robot.pose.position()).norm();
    robot = r.state;
    out.currents.push_back(robot.battery_current);
    ++out.steps;

    TrajectoryStep ts;
    ts.step = k;
    ts.pose = robot.pose;
    ts.action = robot.velocity;
    ts.mode = d.mode;
    ts.sample_mode = d.chosen.mode;
    ts.condition = d.condition;
    ts.q = d.chosen.q;
    ts.d_g = (goal - robot.pose.position()).norm();
    ts.current = robot.battery_current;
    ts.entanglement = robot.entanglement;
    ts.flags = {r.collision, r.immobilized, r.clamped};
    for (const Corridor& c : world.corridors) ts.in_corridor = ts.in_corridor || c.contains(robot.pose.position());
    out.trajectory.push_back(ts);

    if (r.collision) {
      out.outcome = Outcome::Collision;
      return out;
    }
    if (r.immobilized) {
      out.outcome = Outcome::Immobilized;
      return out;
    }
    if (ts.d_g <= params.goal_threshold) {
      out.outcome = Outcome::Success;
      return out;
    }
  }
  out.outcome = Outcome::Timeout;
  return out;
}

Json to_json(const TrajectoryStep& s) {
  return {{"step", s.step},
          {"pose", {s.pose.x, s.pose.y, s.pose.theta}},
          {"action", {s.action.x(), s.action.y(), s.action.z()}},
          {"mode", to_string(s.mode)},
          {"sample_mode", to_string(s.sample_mode)},
          {"condition", s.condition},
          {"q", s.q},
          {"d_g", s.d_g},
          {"current", s.current},
          {"entanglement", s.entanglement},
          {"flags", {{"collision", s.flags.collision}, {"immobilized", s.flags.immobilized}, {"clamped", s.flags.clamped}}},
          {"in_corridor", s.in_corridor}};
}

GammaCalibration calibrate_gamma(const ObservationContext& sensing, const DynamicsParams& dynamics, int pairs,
                                 std::uint64_t seed) {
  if (pairs <= 0) throw std::invalid_argument("calibration needs at least one pair");
  WorldModel open;
  open.bounds = {{0.0, 0.0}, {20.0, 20.0}};
  WorldModel vines = open;
  vines.entities.push_back({MaterialKind::Vine, {10.0, 10.0}, 3.0, 0.8});
  Rng rng(seed);
  GammaCalibration out;
  for (int i = 0; i < pairs; ++i) {
    RobotState robot;
    robot.pose = {uniform(rng, 9.0, 11.0), uniform(rng, 9.0, 11.0), uniform(rng, -3.1, 3.1)};
    robot.velocity = Action(uniform(rng, 0.2, 0.8), 0.0, uniform(rng, -0.5, 0.5));
    robot.battery_current = dynamics.idle_current;
    const std::uint64_t s = mix_seed(seed, static_cast<std::uint64_t>(i));
    out.stable_mean += stability(sense(open, robot, sensing, s).proprio).norm();
    robot.entanglement = uniform(rng, 1.0, dynamics.max_entanglement);
    out.unstable_mean += stability(sense(vines, robot, sensing, s).proprio).norm();
  }
  out.stable_mean /= pairs;
  out.unstable_mean /= pairs;
  out.gamma = 0.5 * (out.stable_mean + out.unstable_mean);
  return out;
}

}  // namespace vapor::plan
