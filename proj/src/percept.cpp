#include "vapor/percept.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vapor {

void GridSpec::validate() const {
  if (n <= 0 || n % 2 != 0) throw std::invalid_argument("grid count must be positive and even");
  if (!(beta > 0.0)) throw std::invalid_argument("grid side length must be positive");
}

GridCell grid_of(int l, int m, const GridSpec& grid) {
  if (l < 0 || m < 0 || l >= grid.n || m >= grid.n) throw std::out_of_range("grid index out of range");
  const double half = grid.n / 2.0;
  return {std::floor(l - half) * grid.beta, std::floor(m - half) * grid.beta, grid.beta};
}

namespace {

bool axis_index(double v, const GridSpec& grid, int& idx) {
  int guess = static_cast<int>(std::floor(v / grid.beta + grid.n / 2.0));
  for (int cand : {guess, guess - 1, guess + 1}) {
    if (cand < 0 || cand >= grid.n) continue;
    const double lo = std::floor(cand - grid.n / 2.0) * grid.beta;
    if (v >= lo && v < lo + grid.beta) {
      idx = cand;
      return true;
    }
  }
  return false;
}

bool keep_point(const Eigen::Vector4f& p, const PerceptParams& params) {
  return p.z() >= params.ground_floor && p.z() <= params.height_cap;
}

}  // namespace

bool cell_of(double x, double y, const GridSpec& grid, int& l, int& m) {
  return axis_index(x, grid, l) && axis_index(y, grid, m);
}

Eigen::MatrixXd raw_intensity_map(const PointCloud& cloud, const PerceptParams& params) {
  const GridSpec& g = params.grid;
  g.validate();
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(g.n, g.n);
  for (const auto& p : cloud.points) {
    int l, m;
    if (!keep_point(p, params) || !cell_of(p.x(), p.y(), g, l, m)) continue;
    sum(l, m) += p.w();
  }
  return sum / (g.beta * g.beta);
}

Eigen::MatrixXd intensity_map(const PointCloud& cloud, const PerceptParams& params) {
  const double cap = params.max_intensity / (params.grid.beta * params.grid.beta);
  return raw_intensity_map(cloud, params).unaryExpr([cap](double raw) { return 100.0 * std::min(raw / cap, 1.0); });
}

Eigen::MatrixXd raw_height_map(const PointCloud& cloud, const PerceptParams& params) {
  const GridSpec& g = params.grid;
  g.validate();
  Eigen::MatrixXd best = Eigen::MatrixXd::Constant(g.n, g.n, -std::numeric_limits<double>::infinity());
  for (const auto& p : cloud.points) {
    int l, m;
    if (!keep_point(p, params) || !cell_of(p.x(), p.y(), g, l, m)) continue;
    best(l, m) = std::max(best(l, m), static_cast<double>(p.z()));
  }
  return best.unaryExpr([](double v) { return std::isinf(v) ? 0.0 : v; });
}

Eigen::MatrixXd height_map(const PointCloud& cloud, const PerceptParams& params) {
  const double cap = params.height_cap;
  return raw_height_map(cloud, params).unaryExpr([cap](double z) { return 100.0 * std::clamp(z, 0.0, cap) / cap; });
}

Eigen::MatrixXd goal_map(const Vec2& goal_robot, double total_distance, const PerceptParams& params) {
  if (!(total_distance > 0.0)) throw std::invalid_argument("total goal distance must be positive");
  const GridSpec& g = params.grid;
  g.validate();
  Eigen::MatrixXd out(g.n, g.n);
  for (int l = 0; l < g.n; ++l) {
    for (int m = 0; m < g.n; ++m) {
      const GridCell cell = grid_of(l, m, g);
      const double d = std::hypot(goal_robot.x() - cell.x0, goal_robot.y() - cell.y0);
      out(l, m) = std::clamp(params.goal_weight * d / total_distance, 0.0, 100.0);
    }
  }
  return out;
}

StabilityVector stability(std::span<const ProprioSample> window) {
  if (window.size() < 3) throw std::invalid_argument("stability needs at least 3 samples");
  const auto n = static_cast<Eigen::Index>(window.size());
  Eigen::MatrixXd data(n, kProprioChannels);
  for (Eigen::Index i = 0; i < n; ++i) data.row(i) = window[static_cast<std::size_t>(i)].vector().transpose();

  for (Eigen::Index c = 0; c < data.cols(); ++c) {
    const double mean = data.col(c).mean();
    data.col(c).array() -= mean;
    const double sd = std::sqrt(data.col(c).squaredNorm() / static_cast<double>(n - 1));
    if (sd <= 1e-12 * std::max(1.0, std::abs(mean))) {
      data.col(c).setZero();
    } else {
      data.col(c) /= sd;
    }
  }
  const Eigen::MatrixXd cov = data.transpose() * data / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  const auto& ev = solver.eigenvalues();  // ascending
  return {std::max(ev[ev.size() - 1], 0.0), std::max(ev[ev.size() - 2], 0.0)};
}

Vec2 to_robot_frame(const Pose2& pose, const Vec2& world_point) {
  const Vec2 d = world_point - pose.position();
  const double c = std::cos(pose.theta), s = std::sin(pose.theta);
  return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

SensorFrame sense(const WorldModel& world, const RobotState& robot, const ObservationContext& ctx,
                  std::uint64_t seed) {
  SensorFrame frame;
  frame.cloud = simulate_lidar(world, robot, ctx.lidar, mix_seed(seed, 1));
  frame.proprio = sample_proprioception(world, robot, ctx.window, ctx.proprio, mix_seed(seed, 2));
  return frame;
}

Observation observe(const SensorFrame& frame, const Pose2& pose, const Vec2& goal, double total_distance,
                    const PerceptParams& params) {
  Observation obs;
  obs.maps.grid = params.grid;
  obs.maps.intensity = intensity_map(frame.cloud, params);
  obs.maps.height = height_map(frame.cloud, params);
  obs.maps.goal = goal_map(to_robot_frame(pose, goal), total_distance, params);
  obs.stability = stability(frame.proprio);
  return obs;
}

Observation observe(const WorldModel& world, const RobotState& robot, const Vec2& goal, double total_distance,
                    const ObservationContext& ctx, std::uint64_t seed) {
  return observe(sense(world, robot, ctx, seed), robot.pose, goal, total_distance, ctx.percept);
}

}  // namespace vapor
