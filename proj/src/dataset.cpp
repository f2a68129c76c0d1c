#include "vapor/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace vapor {

void RewardParams::validate() const {
  if (!(eta[0] > eta[1] && eta[1] > eta[2] && eta[2] > 0.0)) throw std::invalid_argument("eta must be strictly decreasing and positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("energy weight must be positive");
  if (!(goal_threshold > 0.0)) throw std::invalid_argument("goal threshold must be positive");
  for (double r : radii) {
    if (!(r > 0.0)) throw std::invalid_argument("neighborhood radii must be positive");
  }
}

double r_goal(double d_g, double d_tot, const RewardParams& params) {
  if (d_g <= params.goal_threshold) return params.lambda_reached;
  return params.lambda_far * d_tot / std::max(d_g, params.goal_threshold / 2.0);
}

std::vector<std::pair<int, int>> neighborhood(const GridSpec& grid, double radius) {
  std::vector<std::pair<int, int>> cells;
  for (int l = 0; l < grid.n; ++l) {
    for (int m = 0; m < grid.n; ++m) {
      const GridCell c = grid_of(l, m, grid);
      if (std::hypot(c.x0 + c.side / 2, c.y0 + c.side / 2) <= radius) cells.emplace_back(l, m);
    }
  }
  return cells;
}

double r_veg(const Eigen::MatrixXd& intensity, const GridSpec& grid, const RewardParams& params) {
  double r = 0.0;
  for (int k = 0; k < 3; ++k) {
    const auto cells = neighborhood(grid, params.radii[k]);
    if (cells.empty()) continue;
    double sum = 0.0;
    for (const auto& [l, m] : cells) sum += intensity(l, m);
    r -= params.eta[k] * sum / static_cast<double>(cells.size());
  }
  return r;
}

double r_energy(double current, const RewardParams& params) { return -params.epsilon * current; }

RewardBreakdown reward(double d_g, double d_tot, const Eigen::MatrixXd& intensity, double current,
                       const GridSpec& grid, const RewardParams& params) {
  RewardBreakdown r;
  r.goal = r_goal(d_g, d_tot, params);
  r.veg = r_veg(intensity, grid, params);
  r.energy = r_energy(current, params);
  r.total = params.beta_goal * r.goal + params.beta_veg * r.veg + params.beta_energy * r.energy;
  return r;
}

std::vector<Segment> segment(std::span<const Vec2> positions, const SegmentParams& params, Rng& rng) {
  std::vector<Segment> out;
  const int n = static_cast<int>(positions.size());
  if (n < 2) return out;
  const int attempts = std::max(1, static_cast<int>(std::lround(n * params.segments_per_step)));
  std::vector<int> candidates;
  for (int a = 0; a < attempts; ++a) {
    const int start = std::uniform_int_distribution<int>(0, n - 2)(rng);
    candidates.clear();
    const int last = std::min(n - 1, start + params.max_steps);
    for (int j = start + 1; j <= last; ++j) {
      const double d = (positions[j] - positions[start]).norm();
      if (d >= params.min_distance && d <= params.max_distance) candidates.push_back(j);
    }
    if (candidates.empty()) continue;
    const auto pick = std::uniform_int_distribution<std::size_t>(0, candidates.size() - 1)(rng);
    out.push_back({start, candidates[pick]});
  }
  return out;
}

TransitionRecord to_record(const Transition& t) {
  TransitionRecord r;
  r.maps = nn::map_record(t.s.maps);
  r.stability = {static_cast<float>(t.s.stability.pc1), static_cast<float>(t.s.stability.pc2)};
  for (int i = 0; i < 3; ++i) r.action[i] = static_cast<float>(t.a[i]);
  r.reward = {static_cast<float>(t.r.total), static_cast<float>(t.r.goal), static_cast<float>(t.r.veg),
              static_cast<float>(t.r.energy)};
  r.next_maps = nn::map_record(t.next.maps);
  r.next_stability = {static_cast<float>(t.next.stability.pc1), static_cast<float>(t.next.stability.pc2)};
  r.done = t.done;
  return r;
}

namespace {

void track(RewardBreakdown& sum, RewardBreakdown& lo, RewardBreakdown& hi, const RewardBreakdown& r, bool first) {
  auto upd = [first](double& s, double& a, double& b, double v) {
    s += v;
    a = first ? v : std::min(a, v);
    b = first ? v : std::max(b, v);
  };
  upd(sum.goal, lo.goal, hi.goal, r.goal);
  upd(sum.veg, lo.veg, hi.veg, r.veg);
  upd(sum.energy, lo.energy, hi.energy, r.energy);
  upd(sum.total, lo.total, hi.total, r.total);
}

// Goal-independent per-step observation parts, computed once per rollout step.
struct StepPercept {
  Eigen::MatrixXd intensity;
  Eigen::MatrixXd height;
  StabilityVector stability;
};

}  // namespace

bool build_rollout(const Rollout& rollout, const BuildParams& params, TransitionSink& sink, BuildStats& stats) {
  const auto& steps = rollout.steps;
  ++stats.episodes;
  if (params.max_transitions > 0 && stats.transitions >= params.max_transitions) return false;
  if (steps.size() < 2) return true;

  std::vector<Vec2> positions;
  positions.reserve(steps.size());
  for (const auto& s : steps) positions.push_back(s.pose.position());
  Rng rng(mix_seed(mix_seed(params.seed, rollout.episode), static_cast<std::uint64_t>(std::llround(steps[0].t * 1000.0))));
  const auto segments = segment(positions, params.segments, rng);

  std::vector<std::optional<StepPercept>> cache(steps.size());
  auto percept_at = [&](std::size_t j) -> const StepPercept& {
    if (!cache[j]) {
      cache[j] = StepPercept{intensity_map(steps[j].cloud, params.percept), height_map(steps[j].cloud, params.percept),
                             stability(steps[j].proprio)};
    }
    return *cache[j];
  };
  auto observation = [&](std::size_t j, const Vec2& goal, double d_tot) {
    const StepPercept& p = percept_at(j);
    Observation o;
    o.maps.grid = params.percept.grid;
    o.maps.intensity = p.intensity;
    o.maps.height = p.height;
    o.maps.goal = goal_map(to_robot_frame(steps[j].pose, goal), d_tot, params.percept);
    o.stability = p.stability;
    return o;
  };

  for (const Segment& seg : segments) {
    const Vec2 goal = positions[seg.goal];
    const double d_tot = (goal - positions[seg.start]).norm();
    ++stats.segments;
    std::optional<Observation> current;
    for (int j = seg.start; j < seg.goal; ++j) {
      if (!steps[j].has_action) break;
      if (params.max_transitions > 0 && stats.transitions >= params.max_transitions) return false;
      Transition t;
      t.s = current ? std::move(*current) : observation(j, goal, d_tot);
      t.next = observation(j + 1, goal, d_tot);
      t.a = steps[j].action;
      const double d_g = (goal - positions[j + 1]).norm();
      t.r = reward(d_g, d_tot, t.next.maps.intensity, steps[j].current, params.percept.grid, params.rewards);
      // Terms take their stored float32 values before the weighted total is formed.
      t.r.goal = static_cast<float>(t.r.goal);
      t.r.veg = static_cast<float>(t.r.veg);
      t.r.energy = static_cast<float>(t.r.energy);
      t.r.total = params.rewards.beta_goal * t.r.goal + params.rewards.beta_veg * t.r.veg +
                  params.rewards.beta_energy * t.r.energy;
      t.done = d_g <= params.rewards.goal_threshold || j + 1 == seg.goal;
      t.meta = {rollout.episode, d_g, d_tot, steps[j].current};
      sink.add(t);
      track(stats.sum, stats.min, stats.max, t.r, stats.transitions == 0);
      ++stats.transitions;
      if (t.done) {
        ++stats.done;
        break;
      }
      current = std::move(t.next);
    }
  }
  return true;
}

void TrainingSet::append(const TransitionRecord& r, const nn::NetworkConfig& cfg) {
  width = cfg.extero_width();
  const auto e = nn::pool_record<float>(r.maps.data(), cfg);
  const auto ne = nn::pool_record<float>(r.next_maps.data(), cfg);
  extero.insert(extero.end(), e.data(), e.data() + e.size());
  next_extero.insert(next_extero.end(), ne.data(), ne.data() + ne.size());
  const auto p = nn::proprio_features<float>(r.stability[0], r.stability[1]);
  const auto np = nn::proprio_features<float>(r.next_stability[0], r.next_stability[1]);
  proprio.insert(proprio.end(), p.data(), p.data() + 2);
  next_proprio.insert(next_proprio.end(), np.data(), np.data() + 2);
  action.insert(action.end(), r.action.begin(), r.action.end());
  reward.push_back(r.reward[0]);
  done.push_back(r.done ? 1 : 0);
}

template <typename S>
nn::StateBatch<S> TrainingSet::states(std::span<const std::size_t> idx, bool next) const {
  const auto& e = next ? next_extero : extero;
  const auto& p = next ? next_proprio : proprio;
  nn::StateBatch<S> b;
  b.extero.resize(static_cast<Eigen::Index>(idx.size()), width);
  b.proprio.resize(static_cast<Eigen::Index>(idx.size()), 2);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    for (int c = 0; c < width; ++c) b.extero(row, c) = static_cast<S>(e[idx[r] * width + c]);
    b.proprio(row, 0) = static_cast<S>(p[idx[r] * 2]);
    b.proprio(row, 1) = static_cast<S>(p[idx[r] * 2 + 1]);
  }
  return b;
}

template <typename S>
ad::Matrix<S> TrainingSet::actions(std::span<const std::size_t> idx) const {
  ad::Matrix<S> a(static_cast<Eigen::Index>(idx.size()), 3);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    for (int c = 0; c < 3; ++c) a(static_cast<Eigen::Index>(r), c) = static_cast<S>(action[idx[r] * 3 + c]);
  }
  return a;
}

template nn::StateBatch<float> TrainingSet::states<float>(std::span<const std::size_t>, bool) const;
template nn::StateBatch<double> TrainingSet::states<double>(std::span<const std::size_t>, bool) const;
template ad::Matrix<float> TrainingSet::actions<float>(std::span<const std::size_t>) const;
template ad::Matrix<double> TrainingSet::actions<double>(std::span<const std::size_t>) const;

std::pair<TrainingSet, TrainingSet> TrainingSet::split(double holdout, std::uint64_t seed) const {
  std::vector<std::size_t> order(size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::floor(holdout * static_cast<double>(size())));
  std::vector<char> is_held(size(), 0);
  for (std::size_t i = 0; i < held; ++i) is_held[order[i]] = 1;

  std::pair<TrainingSet, TrainingSet> out;
  out.first.width = out.second.width = width;
  for (std::size_t i = 0; i < size(); ++i) {
    TrainingSet& dst = is_held[i] ? out.second : out.first;
    auto copy = [i](std::vector<float>& to, const std::vector<float>& from, std::size_t w) {
      to.insert(to.end(), from.begin() + static_cast<std::ptrdiff_t>(i * w), from.begin() + static_cast<std::ptrdiff_t>((i + 1) * w));
    };
    copy(dst.extero, extero, width);
    copy(dst.next_extero, next_extero, width);
    copy(dst.proprio, proprio, 2);
    copy(dst.next_proprio, next_proprio, 2);
    copy(dst.action, action, 3);
    dst.reward.push_back(reward[i]);
    dst.done.push_back(done[i]);
  }
  return out;
}

}  // namespace vapor
