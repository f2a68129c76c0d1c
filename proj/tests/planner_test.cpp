#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "vapor/planner.hpp"

using namespace vapor;
using namespace vapor::plan;

namespace {

class StubScorer : public ActionScorer {
 public:
  explicit StubScorer(std::function<double(const Observation&, const Action&)> f) : f_(std::move(f)) {}
  void score(const Observation& obs, std::span<VelocitySample> samples) override {
    for (VelocitySample& s : samples) s.q = f_(obs, s.a);
  }

 private:
  std::function<double(const Observation&, const Action&)> f_;
};

VelocityLimits slow_limits() {
  VelocityLimits l;
  l.accel_max = 0.5;
  return l;
}

bool exclusive(const Action& a) { return (a.z() == 0.0) != (a.y() == 0.0) || (a.y() == 0.0 && a.z() == 0.0); }

Observation blank_obs() {
  Observation o;
  o.maps.grid = GridSpec{};
  o.maps.intensity = Eigen::MatrixXd::Zero(40, 40);
  o.maps.height = Eigen::MatrixXd::Zero(40, 40);
  o.maps.goal = Eigen::MatrixXd::Zero(40, 40);
  return o;
}

}  // namespace

TEST(ReachableSet, IntervalArithmetic) {
  const auto set = reachable_set(Action(0.3, 0, 0), slow_limits(), Mode::Nonholonomic, 7);
  double lo = 1e9, hi = -1e9;
  for (const auto& s : set) {
    lo = std::min(lo, s.a.x());
    hi = std::max(hi, s.a.x());
    EXPECT_EQ(s.a.y(), 0.0);
    EXPECT_EQ(s.mode, Mode::Nonholonomic);
  }
  EXPECT_NEAR(lo, 0.25, 1e-12);
  EXPECT_NEAR(hi, 0.35, 1e-12);
}

TEST(ReachableSet, ClipsAtVelocityLimits) {
  VelocityLimits l;
  for (Mode m : {Mode::Holonomic, Mode::Nonholonomic}) {
    for (const auto& s : reachable_set(Action(l.v_max, 0, 0), l, m, 7)) {
      EXPECT_LE(s.a.x(), l.v_max);
      EXPECT_LE(std::abs(s.a.y()), l.v_max);
      EXPECT_LE(std::abs(s.a.z()), l.omega_max);
    }
  }
}

TEST(ReachableSet, ThreeByThreeCenteredOnCurrent) {
  const Action cur(0.3, 0.0, 0.2);
  const auto set = reachable_set(cur, VelocityLimits{}, Mode::Nonholonomic, 3);
  ASSERT_EQ(set.size(), 9u);
  EXPECT_NEAR((set[4].a - cur).norm(), 0.0, 1e-12);
  EXPECT_THROW(reachable_set(cur, VelocityLimits{}, Mode::Nonholonomic, 4), std::invalid_argument);
  EXPECT_THROW(reachable_set(cur, VelocityLimits{}, Mode::Nonholonomic, 1), std::invalid_argument);
}

TEST(ReachableSet, FeasibleAndExclusiveFromRandomStates) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const VelocityLimits l;
  for (int i = 0; i < 2000; ++i) {
    const bool holo = i % 2 == 0;
    Action cur(u(rng), holo ? u(rng) : 0.0, holo ? 0.0 : u(rng));
    for (Mode m : {Mode::Holonomic, Mode::Nonholonomic}) {
      const auto set = reachable_set(cur, l, m, 7);
      ASSERT_FALSE(set.empty());
      for (const auto& s : set) {
        EXPECT_TRUE(exclusive(s.a));
        EXPECT_LE(std::abs(s.a.x() - cur.x()), l.accel_max * l.dt + 1e-12);
        EXPECT_LE(std::abs(s.a.y() - cur.y()), l.accel_max * l.dt + 1e-12);
        EXPECT_LE(std::abs(s.a.z() - cur.z()), l.omega_accel_max * l.dt + 1e-12);
        if (s.mode == Mode::Holonomic) {
          EXPECT_EQ(s.a.z(), 0.0);
        }
        if (s.mode == Mode::Nonholonomic) {
          EXPECT_EQ(s.a.y(), 0.0);
        }
      }
    }
  }
}

TEST(ReachableSet, ModeSwitchDrivesDroppedAxisToZero) {
  const VelocityLimits l;
  const auto far = reachable_set(Action(0.5, 0.0, 0.6), l, Mode::Holonomic, 7);
  ASSERT_EQ(far.size(), 7u);
  for (const auto& s : far) {
    EXPECT_NEAR(s.a.z(), 0.4, 1e-12);
    EXPECT_EQ(s.mode, Mode::Nonholonomic);
  }
  const auto near = reachable_set(Action(0.5, 0.0, 0.15), l, Mode::Holonomic, 7);
  ASSERT_EQ(near.size(), 49u);
  for (const auto& s : near) EXPECT_EQ(s.a.z(), 0.0);
}

TEST(BestSample, MonotoneStubPicksMaxVx) {
  auto set = reachable_set(Action(0.3, 0, 0), VelocityLimits{}, Mode::Nonholonomic, 7);
  for (auto& s : set) s.q = s.a.x();
  const auto& best = set[best_sample(set)];
  EXPECT_NEAR(best.a.x(), 0.4, 1e-12);
  EXPECT_EQ(best.a.z(), 0.0);
}

TEST(BestSample, ConstantQPicksSmallestNorm) {
  auto set = reachable_set(Action(0.3, 0, 0.1), VelocityLimits{}, Mode::Nonholonomic, 7);
  std::size_t smallest = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i].a.norm() < set[smallest].a.norm()) smallest = i;
  }
  EXPECT_EQ(best_sample(set), smallest);
}

TEST(BestSample, LexicographicTieBreak) {
  std::vector<VelocitySample> set = {{Action(0.0, 0.1, 0.0), 1.0, Mode::Holonomic},
                                     {Action(0.1, 0.0, 0.0), 1.0, Mode::Holonomic},
                                     {Action(0.0, -0.1, 0.0), 1.0, Mode::Holonomic}};
  EXPECT_EQ(best_sample(set), 2u);
  EXPECT_THROW(best_sample(std::span<const VelocitySample>{}), std::invalid_argument);
}

TEST(BestSample, AffineInvariance) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    auto set = reachable_set(Action(0.2, 0.1, 0), VelocityLimits{}, Mode::Holonomic, 7);
    for (auto& s : set) s.q = std::round(n(rng) * 4.0) / 4.0;
    const std::size_t base = best_sample(set);
    const double c1 = std::exp(n(rng)), c2 = n(rng) * 10;
    for (auto& s : set) s.q = c1 * s.q + c2;
    EXPECT_EQ(best_sample(set), base);
  }
}

TEST(ConditionC, Examples) {
  ContextConfig cfg;
  const GridSpec g;
  Eigen::MatrixXd in_band = Eigen::MatrixXd::Constant(40, 40, 60.0);
  EXPECT_FALSE(condition_c({0.0, 0.0}, in_band, g, cfg));
  const double s = 2.0 * cfg.gamma;
  EXPECT_TRUE(condition_c({s * s / 2, s * s / 2}, in_band, g, cfg));
  Eigen::MatrixXd out_band = Eigen::MatrixXd::Constant(40, 40, 90.0);
  EXPECT_FALSE(condition_c({s * s / 2, s * s / 2}, out_band, g, cfg));
  EXPECT_FALSE(condition_c({s * s / 2, s * s / 2}, Eigen::MatrixXd::Zero(40, 40), g, cfg));
  EXPECT_DOUBLE_EQ(band_fraction(in_band, g, cfg), 1.0);
}

TEST(ConditionC, BandFractionIgnoresEmptyCells) {
  ContextConfig cfg;
  const GridSpec g;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(40, 40);
  m(20, 20) = 60.0;
  m(20, 21) = 10.0;
  EXPECT_DOUBLE_EQ(band_fraction(m, g, cfg), 0.5);
  m(0, 0) = 10.0;  // outside the radius
  EXPECT_DOUBLE_EQ(band_fraction(m, g, cfg), 0.5);
}

TEST(ConditionC, Monotone) {
  ContextConfig cfg;
  const GridSpec g;
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> cell(14, 26);
  for (int trial = 0; trial < 300; ++trial) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(40, 40);
    for (int k = 0; k < 40; ++k) {
      const double r = u(rng);
      m(cell(rng), cell(rng)) = r < 0.3 ? 0.0 : r < 0.6 ? 60.0 : 95.0;
    }
    StabilityVector sp{u(rng) * 3, u(rng) * 3};
    bool before = condition_c(sp, m, g, cfg);
    for (int k = 0; k < 20; ++k) {
      const int l = cell(rng), c = cell(rng);
      if (m(l, c) < 50.0 || m(l, c) > 75.0) m(l, c) = 65.0;
      if (u(rng) < 0.3) sp.pc1 += u(rng);
      const bool after = condition_c(sp, m, g, cfg);
      EXPECT_FALSE(before && !after);
      before = after;
    }
  }
}

TEST(ConditionC, RejectsBadConfig) {
  ContextConfig c;
  c.band_lo = 80;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = ContextConfig{};
  c.phi = 1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(ContextPlanner, HysteresisDelaysSwitch) {
  StubScorer zero([](const Observation&, const Action&) { return 0.0; });
  ContextPlanner planner(zero, PlannerParams{});
  Observation obs = blank_obs();
  obs.maps.intensity.setConstant(60.0);
  obs.stability = {5.0, 5.0};
  RobotState robot;
  const VelocityLimits l;
  std::vector<Mode> modes;
  for (int i = 0; i < 4; ++i) {
    const Decision d = planner.decide({obs, robot, Vec2(5, 0), l});
    EXPECT_TRUE(d.condition);
    modes.push_back(d.mode);
  }
  EXPECT_EQ(modes[0], Mode::Nonholonomic);
  EXPECT_EQ(modes[1], Mode::Nonholonomic);
  EXPECT_EQ(modes[2], Mode::Holonomic);
  EXPECT_EQ(modes[3], Mode::Holonomic);
  planner.reset();
  EXPECT_EQ(planner.mode(), Mode::Nonholonomic);

  ContextPlanner blind(zero, PlannerParams{}, true);
  for (int i = 0; i < 5; ++i) EXPECT_EQ(blind.decide({obs, robot, Vec2(5, 0), l}).mode, Mode::Nonholonomic);
}

TEST(Episode, GoalAtStartAndZeroBudget) {
  WorldModel w;
  w.bounds = {{0, 0}, {20, 20}};
  StraightToGoal p;
  EpisodeParams ep;
  const auto r = run_episode(w, {5, 5, 0}, {5, 5}, p, ep, 1);
  EXPECT_EQ(r.outcome, Outcome::Success);
  EXPECT_EQ(r.steps, 0);
  ep.budget = 0;
  EXPECT_EQ(run_episode(w, {5, 5, 0}, {12, 5}, p, ep, 1).outcome, Outcome::Timeout);
  EXPECT_THROW(run_episode(w, {5, 5, 0}, {25, 5}, p, ep, 1), std::invalid_argument);
}

TEST(Episode, GoalMapDescentApproachesGoal) {
  WorldModel w;
  w.bounds = {{0, 0}, {20, 20}};
  StubScorer descend([](const Observation& obs, const Action& a) {
    int l = 0, m = 0;
    if (!cell_of(3.0 * a.x(), 3.0 * a.y(), obs.maps.grid, l, m)) return -1e9;
    return -obs.maps.goal(l, m);
  });
  ContextPlanner planner(descend, PlannerParams{});
  EpisodeParams ep;
  const auto r = run_episode(w, {3, 10, 0}, {11, 10}, planner, ep, 2);
  EXPECT_EQ(r.outcome, Outcome::Success);
  double prev = 8.0;
  for (const auto& s : r.trajectory) {
    EXPECT_LE(s.d_g, prev + 1e-12);
    prev = s.d_g;
  }
  EXPECT_NEAR(r.path_length / r.straight_distance, 1.0, 0.1);
}

TEST(Episode, FeasibleAndExclusiveUnderRandomPolicy) {
  for (Archetype a : kAllArchetypes) {
    const WorldModel w = generate_world({a, 3});
    RandomFeasible policy(17);
    EpisodeParams ep;
    ep.budget = 300;
    const auto r = run_episode(w, w.mission.start, w.mission.goal, policy, ep, 5);
    Action prev = Action::Zero();
    const VelocityLimits& l = ep.dynamics.limits;
    for (const auto& s : r.trajectory) {
      EXPECT_TRUE(exclusive(s.action));
      EXPECT_LE(std::abs(s.action.x() - prev.x()), l.accel_max * l.dt + 1e-12);
      EXPECT_LE(std::abs(s.action.y() - prev.y()), l.accel_max * l.dt + 1e-12);
      EXPECT_LE(std::abs(s.action.z() - prev.z()), l.omega_accel_max * l.dt + 1e-12);
      EXPECT_FALSE(s.flags.clamped);
      prev = s.action;
    }
    EXPECT_EQ(r.currents.size(), r.trajectory.size());
  }
}

TEST(Episode, Deterministic) {
  const WorldModel w = generate_world({Archetype::VineField, 8});
  RandomFeasible p1(3), p2(3);
  EpisodeParams ep;
  ep.budget = 150;
  const auto a = run_episode(w, w.mission.start, w.mission.goal, p1, ep, 9);
  const auto b = run_episode(w, w.mission.start, w.mission.goal, p2, ep, 9);
  ASSERT_EQ(a.trajectory.size(), b.trajectory.size());
  for (std::size_t i = 0; i < a.trajectory.size(); ++i) EXPECT_EQ(to_json(a.trajectory[i]), to_json(b.trajectory[i]));
}

TEST(Gamma, CalibrationSeparatesStableFromEntangled) {
  const auto c = calibrate_gamma(ObservationContext{}, DynamicsParams{}, 30, 1);
  EXPECT_LT(c.stable_mean, c.gamma);
  EXPECT_GT(c.unstable_mean, c.gamma);
  EXPECT_NEAR(ContextConfig{}.gamma, c.gamma, 0.2);
}
