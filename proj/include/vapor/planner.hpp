#pragma once

// Context-aware velocity selection: condition C picks the motion mode, the
// reachable lattice of that mode is scored by a critic, and the best sample wins.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vapor/networks.hpp"
#include "vapor/percept.hpp"
#include "vapor/world.hpp"
#include "vapor/world_io.hpp"

namespace vapor::plan {

enum class Mode : std::uint8_t { Holonomic, Nonholonomic };

std::string_view to_string(Mode m);

struct ContextConfig {
  double gamma = 2.8;    // instability threshold on sqrt(pc1 + pc2)
  double band_lo = 50.0;
  double band_hi = 75.0;
  double phi = 0.3;      // share of non-empty A2 cells that must be in band
  double radius = 1.5;
  int hysteresis = 3;

  void validate() const;
};

struct PlannerParams {
  ContextConfig context;
  int lattice = 7;  // samples per axis
};

struct VelocitySample {
  Action a = Action::Zero();
  double q = 0.0;
  Mode mode = Mode::Nonholonomic;
};

/// Share of non-empty cells within `radius` whose intensity lies in the band.
double band_fraction(const Eigen::MatrixXd& intensity, const GridSpec& grid, const ContextConfig& cfg);
bool condition_c(const StabilityVector& sp, const Eigen::MatrixXd& intensity, const GridSpec& grid,
                 const ContextConfig& cfg);

/// k x k lattice over the per-axis reachable intervals of `mode`. The axis the mode
/// drops is driven to the reachable value nearest zero; while that value is still
/// non-zero the samples keep the other mode's form and are labelled with it.
std::vector<VelocitySample> reachable_set(const Action& current, const VelocityLimits& limits, Mode mode, int k);

/// Index of the best sample: highest q, then smaller norm, then lexicographic (v_x, v_y, omega).
std::size_t best_sample(std::span<const VelocitySample> samples);

class ActionScorer {
 public:
  virtual ~ActionScorer() = default;
  virtual void score(const Observation& obs, std::span<VelocitySample> samples) = 0;
};

/// Scores candidates with a frozen critic in a single batch.
class CriticScorer : public ActionScorer {
 public:
  CriticScorer(nn::QNetwork<float> critic, bool zero_proprio = false)
      : critic_(std::move(critic)), zero_proprio_(zero_proprio) {}
  void score(const Observation& obs, std::span<VelocitySample> samples) override;

 private:
  nn::QNetwork<float> critic_;
  bool zero_proprio_ = false;
};

struct StepContext {
  const Observation& obs;
  const RobotState& robot;
  Vec2 goal_robot;
  const VelocityLimits& limits;
};

struct Decision {
  VelocitySample chosen;
  Mode mode = Mode::Nonholonomic;  // mode requested by the context logic
  bool condition = false;
  std::vector<VelocitySample> lattice;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset() {}
  virtual Decision decide(const StepContext& ctx) = 0;
};

/// Condition C with hysteresis, then argmax of the scorer over the reachable lattice.
class ContextPlanner : public Policy {
 public:
  ContextPlanner(ActionScorer& scorer, const PlannerParams& params, bool ignore_context = false);
  void reset() override;
  Decision decide(const StepContext& ctx) override;
  Mode mode() const { return mode_; }

 private:
  ActionScorer& scorer_;
  PlannerParams params_;
  bool ignore_context_ = false;
  Mode mode_ = Mode::Nonholonomic;
  int pending_ = 0;
};

/// Nonholonomic lattice sample whose one-second rollout ends closest to the goal.
class StraightToGoal : public Policy {
 public:
  explicit StraightToGoal(int lattice = 7) : lattice_(lattice) {}
  Decision decide(const StepContext& ctx) override;

 private:
  int lattice_;
};

/// Uniformly random sample of the reachable lattice in a randomly held mode.
class RandomFeasible : public Policy {
 public:
  RandomFeasible(std::uint64_t seed, int lattice = 7) : seed_(seed), rng_(seed), lattice_(lattice) {}
  void reset() override { rng_.seed(seed_); }
  Decision decide(const StepContext& ctx) override;

 private:
  std::uint64_t seed_;
  Rng rng_;
  int lattice_;
  Mode mode_ = Mode::Nonholonomic;
};

enum class Outcome : std::uint8_t { Success, Collision, Immobilized, Timeout };

std::string_view to_string(Outcome o);

struct EpisodeParams {
  int budget = 600;
  double goal_threshold = 0.5;
  DynamicsParams dynamics;
  ObservationContext sensing;
};

struct TrajectoryStep {
  int step = 0;
  Pose2 pose;
  Action action = Action::Zero();
  Mode mode = Mode::Nonholonomic;
  Mode sample_mode = Mode::Nonholonomic;
  bool condition = false;
  double q = 0.0;
  double d_g = 0.0;
  double current = 0.0;
  double entanglement = 0.0;
  StepFlags flags;
  bool in_corridor = false;
};

struct EpisodeResult {
  Outcome outcome = Outcome::Timeout;
  int steps = 0;
  double path_length = 0.0;
  double straight_distance = 0.0;
  std::vector<double> currents;
  std::vector<TrajectoryStep> trajectory;
};

using DecisionHook = std::function<void(int step, const RobotState& robot, const Decision& decision)>;

/// Closed loop: observe, decide, step, until success, collision, immobilization or the budget.
EpisodeResult run_episode(const WorldModel& world, const Pose2& start, const Vec2& goal, Policy& policy,
                          const EpisodeParams& params, std::uint64_t seed, const DecisionHook& hook = {});

Json to_json(const TrajectoryStep& s);

struct GammaCalibration {
  double stable_mean = 0.0;
  double unstable_mean = 0.0;
  double gamma = 0.0;
};

/// Paired windows on open ground and inside a vine patch while entangled; Gamma is
/// the midpoint of the two mean stability norms.
GammaCalibration calibrate_gamma(const ObservationContext& sensing, const DynamicsParams& dynamics, int pairs,
                                 std::uint64_t seed);

}  // namespace vapor::plan
