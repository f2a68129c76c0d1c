#pragma once

#include <span>
#include <vector>

#include "vapor/types.hpp"
#include "vapor/world.hpp"

namespace vapor {

/// Half-open robot-frame cell [x0, x0+side) x [y0, y0+side).
struct GridCell {
  double x0 = 0.0;
  double y0 = 0.0;
  double side = 0.0;

  bool contains(double x, double y) const { return x >= x0 && x < x0 + side && y >= y0 && y < y0 + side; }
};

struct GridSpec {
  int n = 40;
  double beta = 0.25;

  void validate() const;
  double extent() const { return n * beta; }
};

/// Cell geometry of index (l, m); the origin carries the floor of (l - n/2)*beta.
GridCell grid_of(int l, int m, const GridSpec& grid);

/// Cell index of a robot-frame point, or false when it lies outside every cell.
bool cell_of(double x, double y, const GridSpec& grid, int& l, int& m);

struct PerceptParams {
  GridSpec grid;
  double height_cap = 2.0;
  double ground_floor = -0.1;
  double goal_weight = 100.0;
  double max_intensity = 255.0;
};

/// The three robot-centric n x n maps, values in [0, 100]; (l, m) indexes (x, y).
struct CostMapStack {
  GridSpec grid;
  Eigen::MatrixXd intensity;
  Eigen::MatrixXd height;
  Eigen::MatrixXd goal;
};

struct StabilityVector {
  double pc1 = 0.0;
  double pc2 = 0.0;

  double norm() const { return std::sqrt(pc1 + pc2); }
};

struct Observation {
  CostMapStack maps;
  StabilityVector stability;
};

/// Per-cell intensity sums divided by beta^2, before rescaling.
Eigen::MatrixXd raw_intensity_map(const PointCloud& cloud, const PerceptParams& params);
Eigen::MatrixXd intensity_map(const PointCloud& cloud, const PerceptParams& params);
Eigen::MatrixXd raw_height_map(const PointCloud& cloud, const PerceptParams& params);
Eigen::MatrixXd height_map(const PointCloud& cloud, const PerceptParams& params);
Eigen::MatrixXd goal_map(const Vec2& goal_robot, double total_distance, const PerceptParams& params);

StabilityVector stability(std::span<const ProprioSample> window);

/// Expresses a world point in the robot frame.
Vec2 to_robot_frame(const Pose2& pose, const Vec2& world_point);

struct ObservationContext {
  LidarConfig lidar;
  ProprioParams proprio;
  PerceptParams percept;
  int window = 32;
};

/// Goal-independent part of an observation: what the sensors alone produce.
struct SensorFrame {
  PointCloud cloud;
  std::vector<ProprioSample> proprio;
};

SensorFrame sense(const WorldModel& world, const RobotState& robot, const ObservationContext& ctx,
                  std::uint64_t seed);

Observation observe(const SensorFrame& frame, const Pose2& pose, const Vec2& goal, double total_distance,
                    const PerceptParams& params);

Observation observe(const WorldModel& world, const RobotState& robot, const Vec2& goal, double total_distance,
                    const ObservationContext& ctx, std::uint64_t seed);

}  // namespace vapor
