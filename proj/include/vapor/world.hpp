#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "vapor/types.hpp"

namespace vapor {

enum class MaterialKind : std::uint8_t { Grass, Bush, Vine, Tree, Ground, Rock };
inline constexpr std::size_t kMaterialCount = 6;

std::string_view to_string(MaterialKind kind);
MaterialKind material_from_string(std::string_view name);

struct Material {
  MaterialKind kind = MaterialKind::Ground;
  double pliability = 1.0;   // 1 = fully traversable
  double reflectance = 0.0;  // fraction of the full-scale intensity returned
  double min_height = 0.0;
  double max_height = 0.0;
  double roughness = 0.0;    // drives proprioceptive disturbance when underfoot

  bool solid() const { return pliability <= 0.0; }
  bool entangling() const { return kind == MaterialKind::Vine || kind == MaterialKind::Bush; }
};

class MaterialTable {
 public:
  static MaterialTable defaults();

  const Material& operator[](MaterialKind kind) const { return table_[static_cast<std::size_t>(kind)]; }
  Material& operator[](MaterialKind kind) { return table_[static_cast<std::size_t>(kind)]; }

 private:
  std::array<Material, kMaterialCount> table_{};
};

/// Disc-footprint vegetation or obstacle.
struct Entity {
  MaterialKind kind = MaterialKind::Grass;
  Vec2 center = Vec2::Zero();
  double radius = 0.0;
  double height = 0.0;
};

struct Bounds {
  Vec2 min = Vec2::Zero();
  Vec2 max = Vec2::Zero();

  double width() const { return max.x() - min.x(); }
  double height() const { return max.y() - min.y(); }
  bool contains(const Vec2& p) const {
    return p.x() >= min.x() && p.x() <= max.x() && p.y() >= min.y() && p.y() <= max.y();
  }
};

enum class Archetype : std::uint8_t { NarrowPassage, DenseBushEntrap, SparseLowlight, VineField, UniformRandom };
inline constexpr std::array<Archetype, 5> kAllArchetypes = {
    Archetype::NarrowPassage, Archetype::DenseBushEntrap, Archetype::SparseLowlight,
    Archetype::VineField, Archetype::UniformRandom};

std::string_view to_string(Archetype a);
Archetype archetype_from_string(std::string_view name);

/// Straight passage between solid obstacles; `a`→`b` is its centerline.
struct Corridor {
  Vec2 a = Vec2::Zero();
  Vec2 b = Vec2::Zero();
  double width = 0.0;

  bool contains(const Vec2& p, double margin = 0.0) const;
};

struct Mission {
  Pose2 start;
  Vec2 goal = Vec2::Zero();
};

struct WorldModel {
  Archetype archetype = Archetype::UniformRandom;
  Bounds bounds;
  std::vector<Entity> entities;
  MaterialTable materials = MaterialTable::defaults();
  std::uint64_t seed = 0;
  Mission mission;
  std::vector<Corridor> corridors;

  /// Indices of entities whose footprint intersects the disc (p, r).
  std::vector<std::size_t> query(const Vec2& p, double r) const;
};

struct WorldParams {
  Archetype archetype = Archetype::UniformRandom;
  std::uint64_t seed = 0;
  Bounds bounds{{0.0, 0.0}, {30.0, 30.0}};
  double robot_radius = 0.3;  // keeps spawn points clear of solids
};

WorldModel generate_world(const WorldParams& params);

struct RobotState {
  Pose2 pose;
  Action velocity = Action::Zero();
  double entanglement = 0.0;
  double battery_current = 0.0;
  double time = 0.0;
};

struct LidarConfig {
  int rays = 72;
  int channels = 4;
  double min_elevation = -0.2617993877991494;  // -15 deg
  double max_elevation = 0.2617993877991494;
  double sensor_height = 0.6;
  double max_range = 10.0;
  double max_intensity = 255.0;
};

/// Robot-frame returns: (x, y, z, intensity), z measured from the ground plane.
struct PointCloud {
  std::vector<Eigen::Vector4f> points;
  float max_intensity = 255.0f;
};

PointCloud simulate_lidar(const WorldModel& world, const RobotState& robot, const LidarConfig& cfg,
                          std::uint64_t seed);

struct DynamicsParams {
  VelocityLimits limits;
  double robot_radius = 0.3;
  double k_rotation = 0.5;     // entanglement per radian turned inside vegetation
  double k_overlap = 0.1;      // entanglement per second at full pliability-weighted overlap
  double decay = 0.98;         // per-step factor outside entangling vegetation
  double max_entanglement = 5.0;
  double idle_current = 3.0;
  double linear_current = 2.0;
  double angular_current = 1.0;
  double entanglement_current = 0.8;
};

struct StepResult {
  RobotState state;
  bool collision = false;
  bool immobilized = false;
  bool clamped = false;
};

/// Clamps `action` into the reachable box around `current` and the absolute limits.
Action clamp_action(const Action& current, const Action& action, const VelocityLimits& limits,
                    bool* clamped = nullptr);

StepResult step(const WorldModel& world, const RobotState& robot, const Action& action,
                const DynamicsParams& params);

/// Pliability-weighted fraction of the robot footprint covered by entangling vegetation, in [0,1].
double entangling_overlap(const WorldModel& world, const Vec2& position, double robot_radius);
/// Roughness of what is underfoot, weighted by footprint overlap.
double terrain_roughness(const WorldModel& world, const Vec2& position, double robot_radius);
bool in_solid_contact(const WorldModel& world, const Vec2& position, double robot_radius);

inline constexpr int kProprioChannels = 13;

struct ProprioSample {
  std::array<double, 8> joints{};  // h1x h1y ... h4x h4y
  std::array<double, 4> forces{};
  double current = 0.0;

  Eigen::Matrix<double, kProprioChannels, 1> vector() const;
};

struct ProprioParams {
  double rate_hz = 50.0;
  double gait_hz = 1.8;
  double joint_noise = 0.02;
  double force_noise = 8.0;
  double current_noise = 0.15;
  double gait_amplitude = 0.01;       // rad per m/s of commanded speed
  double nominal_force = 78.5;
  double gait_force = 4.0;            // N per m/s
  double disturbance_floor = 0.05;
  double disturbance_per_entanglement = 0.6;
  double joint_disturbance = 0.06;
  double force_disturbance = 22.0;
  double current_disturbance = 0.5;
  double robot_radius = 0.3;
};

std::vector<ProprioSample> sample_proprioception(const WorldModel& world, const RobotState& robot,
                                                 int window, const ProprioParams& params,
                                                 std::uint64_t seed);

double circle_intersection_area(double r1, double r2, double d);

}  // namespace vapor
