#include "vapor/world.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace vapor {

namespace {

constexpr double kPi = std::numbers::pi;

struct NamedArchetype {
  Archetype value;
  std::string_view name;
};
constexpr std::array<NamedArchetype, 5> kArchetypeNames = {{
    {Archetype::NarrowPassage, "narrow_passage"},
    {Archetype::DenseBushEntrap, "dense_bush_entrap"},
    {Archetype::SparseLowlight, "sparse_lowlight"},
    {Archetype::VineField, "vine_field"},
    {Archetype::UniformRandom, "uniform_random"},
}};

constexpr std::array<std::string_view, kMaterialCount> kMaterialNames = {
    "grass", "bush", "vine", "tree", "ground", "rock"};

double sample_height(const Material& m, Rng& rng) { return uniform(rng, m.min_height, m.max_height); }

// Builds an entity layout along the mission line: `along` is measured from the start
// towards the goal, `across` to the left of that direction.
class Layout {
 public:
  Layout(WorldModel& world, Rng& rng) : world_(world), rng_(rng) {
    const Vec2 start = world.mission.start.position();
    const Vec2 delta = world.mission.goal - start;
    length_ = delta.norm();
    along_ = delta / length_;
    across_ = Vec2(-along_.y(), along_.x());
  }

  Vec2 at(double along, double across) const {
    return world_.mission.start.position() + along * along_ + across * across_;
  }
  double length() const { return length_; }
  const Vec2& along_axis() const { return along_; }

  bool inside(const Vec2& p, double r) const {
    const auto& b = world_.bounds;
    return p.x() - r >= b.min.x() && p.x() + r <= b.max.x() && p.y() - r >= b.min.y() &&
           p.y() + r <= b.max.y();
  }

  // Solids keep clear of the start and goal so every mission begins collision-free.
  bool clear_of_mission(const Vec2& p, double r, double keepout) const {
    return (p - world_.mission.start.position()).norm() > r + keepout &&
           (p - world_.mission.goal).norm() > r + keepout;
  }

  bool overlaps_solid(const Vec2& p, double r, double gap) const {
    for (const Entity& e : world_.entities) {
      if (world_.materials[e.kind].solid() && (e.center - p).norm() < e.radius + r + gap) return true;
    }
    return false;
  }

  void add(MaterialKind kind, const Vec2& p, double r) {
    world_.entities.push_back({kind, p, r, sample_height(world_.materials[kind], rng_)});
  }

  // Uniformly scattered entities of one kind inside the bounds.
  void scatter(MaterialKind kind, int count, double r_lo, double r_hi, double keepout,
               double line_clearance = 0.0) {
    const auto& b = world_.bounds;
    const bool solid = world_.materials[kind].solid();
    for (int i = 0, attempts = 0; i < count && attempts < count * 50; ++attempts) {
      const double r = uniform(rng_, r_lo, r_hi);
      const Vec2 p(uniform(rng_, b.min.x(), b.max.x()), uniform(rng_, b.min.y(), b.max.y()));
      if (!inside(p, r)) continue;
      if (solid) {
        if (!clear_of_mission(p, r, keepout) || overlaps_solid(p, r, 0.8)) continue;
        if (line_clearance > 0.0 && distance_to_line(p) < r + line_clearance) continue;
      }
      add(kind, p, r);
      ++i;
    }
  }

  // Fills the rectangle [s0,s1]x[t0,t1] (mission-line coordinates) with discs until
  // their union covers `coverage` of it, measured on a 0.1 m lattice.
  void fill_patch(MaterialKind kind, double s0, double s1, double t0, double t1, double coverage,
                  double r_lo, double r_hi) {
    constexpr double kStep = 0.1;
    const int ns = std::max(1, static_cast<int>((s1 - s0) / kStep));
    const int nt = std::max(1, static_cast<int>((t1 - t0) / kStep));
    std::vector<char> hit(static_cast<std::size_t>(ns) * nt, 0);
    int covered = 0;
    for (int attempts = 0; covered < coverage * ns * nt && attempts < 5000; ++attempts) {
      const double r = uniform(rng_, r_lo, r_hi);
      const double cs = uniform(rng_, s0, s1), ct = uniform(rng_, t0, t1);
      const Vec2 p = at(cs, ct);
      if (!inside(p, r)) continue;
      add(kind, p, r);
      for (int i = 0; i < ns; ++i) {
        for (int j = 0; j < nt; ++j) {
          const double ds = s0 + (i + 0.5) * kStep - cs, dt = t0 + (j + 0.5) * kStep - ct;
          char& h = hit[static_cast<std::size_t>(i) * nt + j];
          if (!h && ds * ds + dt * dt <= r * r) {
            h = 1;
            ++covered;
          }
        }
      }
    }
  }

  double distance_to_line(const Vec2& p) const {
    const Vec2 d = p - world_.mission.start.position();
    const double s = std::clamp(d.dot(along_), 0.0, length_);
    return (d - s * along_).norm();
  }

  Rng& rng() { return rng_; }

 private:
  WorldModel& world_;
  Rng& rng_;
  double length_ = 0.0;
  Vec2 along_;
  Vec2 across_;
};

void build_narrow_passage(WorldModel& world, Layout& layout) {
  Rng& rng = layout.rng();
  const double wall_s = layout.length() * uniform(rng, 0.4, 0.55);
  const double gap_t = uniform(rng, -0.3, 0.3);
  const double gap = uniform(rng, 0.95, 1.25);
  constexpr double kHalfLength = 9.0;
  constexpr double kRowOffset = 0.35;
  for (double row : {wall_s - kRowOffset, wall_s + kRowOffset}) {
    for (int side : {-1, 1}) {
      double edge = gap_t + side * gap / 2.0;  // surface of the previous tree
      bool first = true;
      while (std::abs(edge - gap_t) < kHalfLength) {
        const double r = uniform(rng, 0.25, 0.35);
        const double center = first ? edge + side * r : edge + side * (r - 0.05);
        first = false;
        const Vec2 p = layout.at(row, center);
        edge = center + side * r;
        if (!layout.inside(p, r)) continue;
        world.entities.push_back({MaterialKind::Tree, p, r, sample_height(world.materials[MaterialKind::Tree], rng)});
      }
    }
  }
  world.corridors.push_back(
      {layout.at(wall_s - kRowOffset - 0.35, gap_t), layout.at(wall_s + kRowOffset + 0.35, gap_t), gap});
  layout.scatter(MaterialKind::Grass, 40, 0.2, 0.5, 0.0);
  layout.scatter(MaterialKind::Bush, 6, 0.3, 0.6, 0.0);
  // Keep shrubs out of the approach to the passage.
  std::erase_if(world.entities, [&](const Entity& e) {
    return e.kind == MaterialKind::Bush && layout.distance_to_line(e.center) < 2.0;
  });
}

void build_entrapment(WorldModel&, Layout& layout, MaterialKind kind) {
  Rng& rng = layout.rng();
  const double len = layout.length();
  if (kind == MaterialKind::Vine) {
    // Vine patches along the line; the first one surrounds the start.
    double s = -1.0;
    const double first_len = uniform(rng, 2.5, 3.5);
    layout.fill_patch(kind, s, s + first_len, -3.0, 3.0, 0.5, 0.2, 0.35);
    s += first_len + uniform(rng, 1.0, 2.0);
    while (s < len - 1.5) {
      const double patch = uniform(rng, 2.0, 3.5);
      layout.fill_patch(kind, s, std::min(s + patch, len - 1.0), -2.5, 2.5, 0.5, 0.2, 0.35);
      s += patch + uniform(rng, 1.0, 2.0);
    }
  } else {
    const double thicket = uniform(rng, 3.0, 4.0);
    layout.fill_patch(kind, -1.5, -1.5 + thicket, -4.0, 4.0, 0.45, 0.3, 0.55);
    layout.fill_patch(kind, len * 0.55, len * 0.55 + 2.0, -4.0, 4.0, 0.35, 0.3, 0.55);
  }
  layout.scatter(MaterialKind::Tree, 14, 0.2, 0.4, 1.5, 1.2);
  layout.scatter(MaterialKind::Grass, 30, 0.2, 0.5, 0.0);
}

}  // namespace

void VelocityLimits::validate() const {
  if (!(v_max > 0 && omega_max > 0 && accel_max > 0 && omega_accel_max > 0 && dt > 0)) {
    throw std::invalid_argument("velocity limits must be positive");
  }
}

std::string_view to_string(MaterialKind kind) { return kMaterialNames[static_cast<std::size_t>(kind)]; }

MaterialKind material_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kMaterialNames.size(); ++i) {
    if (kMaterialNames[i] == name) return static_cast<MaterialKind>(i);
  }
  throw std::invalid_argument("unknown material: " + std::string(name));
}

std::string_view to_string(Archetype a) {
  for (const auto& n : kArchetypeNames) {
    if (n.value == a) return n.name;
  }
  return "unknown";
}

Archetype archetype_from_string(std::string_view name) {
  for (const auto& n : kArchetypeNames) {
    if (n.name == name) return n.value;
  }
  throw std::invalid_argument("unknown archetype: " + std::string(name));
}

MaterialTable MaterialTable::defaults() {
  MaterialTable t;
  t[MaterialKind::Grass] = {MaterialKind::Grass, 0.95, 0.25, 0.05, 0.35, 0.15};
  t[MaterialKind::Bush] = {MaterialKind::Bush, 0.6, 0.55, 0.5, 1.2, 0.8};
  t[MaterialKind::Vine] = {MaterialKind::Vine, 0.7, 0.65, 0.25, 0.45, 1.0};
  t[MaterialKind::Tree] = {MaterialKind::Tree, 0.0, 0.9, 2.0, 6.0, 0.0};
  t[MaterialKind::Ground] = {MaterialKind::Ground, 1.0, 0.05, 0.0, 0.0, 0.0};
  t[MaterialKind::Rock] = {MaterialKind::Rock, 0.0, 0.85, 0.3, 1.0, 0.0};
  return t;
}

bool Corridor::contains(const Vec2& p, double margin) const {
  const Vec2 axis = b - a;
  const double len = axis.norm();
  const Vec2 u = axis / len;
  const Vec2 d = p - a;
  const double s = d.dot(u);
  const double t = std::abs(d.x() * -u.y() + d.y() * u.x());
  return s >= -margin && s <= len + margin && t <= width / 2.0 + margin;
}

std::vector<std::size_t> WorldModel::query(const Vec2& p, double r) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if ((entities[i].center - p).norm() < entities[i].radius + r) out.push_back(i);
  }
  return out;
}

WorldModel generate_world(const WorldParams& params) {
  if (params.bounds.width() < 10.0 || params.bounds.height() < 10.0) {
    throw std::invalid_argument("world bounds must be at least 10 x 10 m");
  }
  WorldModel world;
  world.archetype = params.archetype;
  world.bounds = params.bounds;
  world.seed = params.seed;
  Rng rng(mix_seed(params.seed, static_cast<std::uint64_t>(params.archetype)));

  const auto& b = params.bounds;
  const double margin = 2.0;
  const Vec2 start(b.min.x() + std::max(margin, 0.12 * b.width()),
                   b.min.y() + 0.5 * b.height() + uniform(rng, -0.1, 0.1) * b.height());
  const double heading = uniform(rng, -0.35, 0.35);
  const double max_len = std::min((b.max.x() - margin - start.x()) / std::cos(heading),
                                  (0.5 * b.height() - margin) / std::max(std::abs(std::sin(heading)), 1e-3));
  const double len = std::min(uniform(rng, 10.0, 18.0), max_len);
  world.mission.goal = start + len * Vec2(std::cos(heading), std::sin(heading));

  double start_theta = heading;
  switch (params.archetype) {
    case Archetype::NarrowPassage: start_theta = heading + uniform(rng, -0.2, 0.2); break;
    case Archetype::SparseLowlight: start_theta = heading + uniform(rng, -kPi / 2, kPi / 2); break;
    default: start_theta = uniform(rng, -kPi, kPi); break;
  }
  world.mission.start = {start.x(), start.y(), wrap_angle(start_theta)};

  Layout layout(world, rng);
  switch (params.archetype) {
    case Archetype::NarrowPassage: build_narrow_passage(world, layout); break;
    case Archetype::DenseBushEntrap: build_entrapment(world, layout, MaterialKind::Bush); break;
    case Archetype::VineField: build_entrapment(world, layout, MaterialKind::Vine); break;
    case Archetype::SparseLowlight:
      layout.scatter(MaterialKind::Tree, 10, 0.2, 0.4, 1.5, 0.8);
      layout.scatter(MaterialKind::Grass, 50, 0.2, 0.6, 0.0);
      layout.scatter(MaterialKind::Bush, 5, 0.3, 0.6, 0.0);
      break;
    case Archetype::UniformRandom:
      layout.scatter(MaterialKind::Tree, 18, 0.2, 0.4, 1.5);
      layout.scatter(MaterialKind::Rock, 6, 0.2, 0.5, 1.5);
      layout.scatter(MaterialKind::Bush, 20, 0.3, 0.6, 0.0);
      layout.scatter(MaterialKind::Vine, 12, 0.2, 0.35, 0.0);
      layout.scatter(MaterialKind::Grass, 40, 0.2, 0.5, 0.0);
      break;
  }
  return world;
}

double circle_intersection_area(double r1, double r2, double d) {
  if (d >= r1 + r2) return 0.0;
  const double rmin = std::min(r1, r2);
  if (d <= std::abs(r1 - r2)) return kPi * rmin * rmin;
  const double a1 = std::acos(std::clamp((d * d + r1 * r1 - r2 * r2) / (2 * d * r1), -1.0, 1.0));
  const double a2 = std::acos(std::clamp((d * d + r2 * r2 - r1 * r1) / (2 * d * r2), -1.0, 1.0));
  const double k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2);
  return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * std::sqrt(std::max(k, 0.0));
}

double entangling_overlap(const WorldModel& world, const Vec2& position, double robot_radius) {
  const double footprint = kPi * robot_radius * robot_radius;
  double sum = 0.0;
  for (std::size_t i : world.query(position, robot_radius)) {
    const Entity& e = world.entities[i];
    const Material& m = world.materials[e.kind];
    if (!m.entangling()) continue;
    sum += m.pliability * circle_intersection_area(robot_radius, e.radius, (e.center - position).norm()) / footprint;
  }
  return std::min(sum, 1.0);
}

double terrain_roughness(const WorldModel& world, const Vec2& position, double robot_radius) {
  const double footprint = kPi * robot_radius * robot_radius;
  double sum = 0.0;
  double cap = 0.0;
  for (std::size_t i : world.query(position, robot_radius)) {
    const Entity& e = world.entities[i];
    const Material& m = world.materials[e.kind];
    sum += m.roughness * circle_intersection_area(robot_radius, e.radius, (e.center - position).norm()) / footprint;
    cap = std::max(cap, m.roughness);
  }
  return std::min(sum, cap);
}

bool in_solid_contact(const WorldModel& world, const Vec2& position, double robot_radius) {
  for (std::size_t i : world.query(position, robot_radius)) {
    if (world.materials[world.entities[i].kind].solid()) return true;
  }
  return false;
}

PointCloud simulate_lidar(const WorldModel& world, const RobotState& robot, const LidarConfig& cfg,
                          std::uint64_t seed) {
  if (cfg.rays < 36 || cfg.channels < 4 || !(cfg.max_range > 0)) {
    throw std::invalid_argument("lidar needs rays >= 36, channels >= 4 and a positive range");
  }
  PointCloud cloud;
  cloud.max_intensity = static_cast<float>(cfg.max_intensity);
  const Vec2 origin = robot.pose.position();
  constexpr double kMinRange = 0.3;

  struct Candidate {
    const Entity* entity;
    const Material* material;
  };
  std::vector<Candidate> candidates;
  for (std::size_t i : world.query(origin, cfg.max_range)) {
    const Entity& e = world.entities[i];
    candidates.push_back({&e, &world.materials[e.kind]});
  }

  struct Hit {
    double t_in, t_out;
    const Entity* entity;
    const Material* material;
  };
  std::vector<Hit> hits;
  std::vector<double> tan_el(cfg.channels), cos_el(cfg.channels);
  for (int c = 0; c < cfg.channels; ++c) {
    const double el = cfg.channels == 1 ? cfg.min_elevation
                                        : cfg.min_elevation + (cfg.max_elevation - cfg.min_elevation) * c /
                                                                  (cfg.channels - 1);
    tan_el[c] = std::tan(el);
    cos_el[c] = std::cos(el);
  }

  for (int k = 0; k < cfg.rays; ++k) {
    const double az = 2.0 * kPi * k / cfg.rays;
    const double world_az = robot.pose.theta + az;
    const Vec2 dir(std::cos(world_az), std::sin(world_az));
    hits.clear();
    for (const Candidate& cand : candidates) {
      const Vec2 oc = cand.entity->center - origin;
      const double b = oc.dot(dir);
      const double disc = b * b - (oc.squaredNorm() - cand.entity->radius * cand.entity->radius);
      if (disc < 0) continue;
      const double sq = std::sqrt(disc);
      const double t_out = b + sq;
      if (t_out < kMinRange) continue;
      hits.push_back({std::max(b - sq, kMinRange), t_out, cand.entity, cand.material});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      return a.t_in < b.t_in || (a.t_in == b.t_in && a.entity < b.entity);
    });

    for (int c = 0; c < cfg.channels; ++c) {
      Rng ray_rng(mix_seed(seed, static_cast<std::uint64_t>(k) * cfg.channels + c));
      const double te = tan_el[c];
      const double ground_t = te < 0 ? cfg.sensor_height / -te : std::numeric_limits<double>::infinity();
      for (const Hit& h : hits) {
        const double z_in = cfg.sensor_height + h.t_in * te;
        double t_hit = -1.0;
        if (h.t_in >= ground_t) break;
        if (z_in <= h.entity->height) {
          t_hit = h.t_in;
        } else if (te < 0) {
          const double t_top = (h.entity->height - cfg.sensor_height) / te;
          if (t_top <= h.t_out && t_top < ground_t) t_hit = t_top;
        }
        if (t_hit < 0) continue;
        const double range = t_hit / cos_el[c];
        if (range > cfg.max_range) break;
        if (h.material->pliability > 0.0 && uniform(ray_rng, 0.0, 1.0) < h.material->pliability) continue;
        const double intensity =
            std::clamp(h.material->reflectance * cfg.max_intensity * (1.0 - range / cfg.max_range), 0.0,
                       cfg.max_intensity);
        cloud.points.emplace_back(static_cast<float>(t_hit * std::cos(az)), static_cast<float>(t_hit * std::sin(az)),
                                  static_cast<float>(cfg.sensor_height + t_hit * te), static_cast<float>(intensity));
        break;
      }
    }
  }
  return cloud;
}

Action clamp_action(const Action& current, const Action& action, const VelocityLimits& limits, bool* clamped) {
  const Action step(limits.accel_max * limits.dt, limits.accel_max * limits.dt, limits.omega_accel_max * limits.dt);
  const Action bound(limits.v_max, limits.v_max, limits.omega_max);
  Action out;
  for (int i = 0; i < 3; ++i) {
    const double lo = std::max(current[i] - step[i], -bound[i]);
    const double hi = std::min(current[i] + step[i], bound[i]);
    out[i] = std::clamp(action[i], std::min(lo, hi), std::max(lo, hi));
  }
  if (clamped != nullptr) *clamped = (out != action);
  return out;
}

StepResult step(const WorldModel& world, const RobotState& robot, const Action& action, const DynamicsParams& p) {
  const double dt = p.limits.dt;
  if (!(dt > 0.0 && dt <= 0.5)) throw std::invalid_argument("step interval must lie in (0, 0.5]");
  StepResult out;
  out.state = robot;
  const Action cmd = clamp_action(robot.velocity, action, p.limits, &out.clamped);
  out.state.velocity = cmd;

  const double slow = 1.0 / (1.0 + robot.entanglement);
  const double omega = cmd.z() * slow;
  const double mid = robot.pose.theta + 0.5 * omega * dt;
  const double c = std::cos(mid), s = std::sin(mid);
  const double dx = (c * cmd.x() - s * cmd.y()) * slow * dt;
  const double dy = (s * cmd.x() + c * cmd.y()) * slow * dt;
  Pose2 next{robot.pose.x + dx, robot.pose.y + dy, wrap_angle(robot.pose.theta + omega * dt)};
  if ((dx != 0.0 || dy != 0.0) && in_solid_contact(world, next.position(), p.robot_radius)) {
    out.collision = true;
    next = robot.pose;
  }
  out.state.pose = next;

  const double overlap = entangling_overlap(world, next.position(), p.robot_radius);
  if (overlap > 0.0) {
    out.state.entanglement = robot.entanglement + (p.k_rotation * std::abs(cmd.z()) + p.k_overlap * overlap) * dt;
  } else {
    out.state.entanglement = robot.entanglement * p.decay;
  }
  out.state.battery_current = p.idle_current + p.linear_current * cmd.head<2>().norm() +
                              p.angular_current * std::abs(cmd.z()) + p.entanglement_current * out.state.entanglement;
  out.state.time = robot.time + dt;
  out.immobilized = out.state.entanglement > p.max_entanglement;
  return out;
}

Eigen::Matrix<double, kProprioChannels, 1> ProprioSample::vector() const {
  Eigen::Matrix<double, kProprioChannels, 1> v;
  for (int i = 0; i < 8; ++i) v[i] = joints[i];
  for (int i = 0; i < 4; ++i) v[8 + i] = forces[i];
  v[12] = current;
  return v;
}

std::vector<ProprioSample> sample_proprioception(const WorldModel& world, const RobotState& robot, int window,
                                                 const ProprioParams& p, std::uint64_t seed) {
  if (window < 2) throw std::invalid_argument("proprioception window must hold at least 2 samples");
  Rng rng(seed);
  // Trot: diagonal legs in phase.
  constexpr std::array<double, 4> kPhase = {0.0, kPi, kPi, 0.0};
  constexpr std::array<double, 4> kSide = {1.0, -1.0, 1.0, -1.0};
  const double speed = robot.velocity.head<2>().norm() + 0.3 * std::abs(robot.velocity.z());
  const double disturbance = p.disturbance_floor + terrain_roughness(world, robot.pose.position(), p.robot_radius) +
                             p.disturbance_per_entanglement * robot.entanglement;

  // Two correlated AR(1) body disturbances shared by every leg.
  constexpr double kAr = 0.7;
  const double innovation = std::sqrt(1.0 - kAr * kAr);
  double d1 = gaussian(rng), d2 = gaussian(rng);

  std::vector<ProprioSample> out(static_cast<std::size_t>(window));
  for (int i = 0; i < window; ++i) {
    const double t = robot.time - (window - 1 - i) / p.rate_hz;
    if (i > 0) {
      d1 = kAr * d1 + innovation * gaussian(rng);
      d2 = kAr * d2 + innovation * gaussian(rng);
    }
    const double b1 = disturbance * d1, b2 = disturbance * d2;
    ProprioSample& s = out[static_cast<std::size_t>(i)];
    for (int leg = 0; leg < 4; ++leg) {
      const double phase = 2.0 * kPi * p.gait_hz * t + kPhase[leg];
      s.joints[2 * leg] = 0.1 * kSide[leg] + p.gait_amplitude * speed * std::sin(phase) + p.joint_disturbance * b1 +
                          p.joint_noise * gaussian(rng);
      s.joints[2 * leg + 1] = 0.8 + 0.5 * p.gait_amplitude * speed * std::cos(phase) +
                              p.joint_disturbance * kSide[leg] * b2 + p.joint_noise * gaussian(rng);
      s.forces[leg] = std::max(0.0, p.nominal_force + p.gait_force * speed * std::sin(phase) +
                                        p.force_disturbance * (b1 + kSide[leg] * b2) + p.force_noise * gaussian(rng));
    }
    s.current = robot.battery_current + p.current_disturbance * b1 + p.current_noise * gaussian(rng);
  }
  return out;
}

}  // namespace vapor
