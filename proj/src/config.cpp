#include "vapor/config.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

namespace vapor {

using nlohmann::json;

void to_json(json& j, Archetype a) { j = std::string(to_string(a)); }
void from_json(const json& j, Archetype& a) { a = archetype_from_string(j.get<std::string>()); }

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(VelocityLimits, v_max, omega_max, accel_max, omega_accel_max, dt)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(DynamicsParams, limits, robot_radius, k_rotation, k_overlap, decay, max_entanglement,
                                   idle_current, linear_current, angular_current, entanglement_current)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(LidarConfig, rays, channels, min_elevation, max_elevation, sensor_height, max_range,
                                   max_intensity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ProprioParams, rate_hz, gait_hz, joint_noise, force_noise, current_noise,
                                   gait_amplitude, nominal_force, gait_force, disturbance_floor,
                                   disturbance_per_entanglement, joint_disturbance, force_disturbance,
                                   current_disturbance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(WandererParams, max_steps, min_speed, max_speed, holonomic_share, goal_share,
                                   explore_rate, noise, avoid_distance)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(WorldSection, width, height, dynamics, lidar, proprio, wanderer, window)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GridSpec, n, beta)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PerceptParams, grid, height_cap, ground_floor, goal_weight, max_intensity)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RewardParams, beta_goal, beta_veg, beta_energy, lambda_far, lambda_reached,
                                   goal_threshold, eta, epsilon, radii)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SegmentParams, min_distance, max_distance, max_steps, segments_per_step)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(RewardsSection, reward, segments, max_transitions, holdout)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalSection, budget, trials, archetypes, methods, hours)

namespace nn {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(NetworkConfig, pool, channel_hidden, ext_hidden, ext_out, prop_hidden, action_hidden,
                                   fusion, attention, log_std_min, log_std_max, head_scale)
}
namespace rl {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CqlParams, gamma, tau, alpha_cql, batch, lr_actor, lr_critic, lr_alpha,
                                   uniform_samples, policy_samples, window, target_entropy, init_alpha)
}
namespace plan {
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(ContextConfig, gamma, band_lo, band_hi, phi, radius, hysteresis)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PlannerParams, context, lattice)
}

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainingSection, cql, steps, log_every)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(Config, seed, world, percept, rewards, network, training, planner, eval)

namespace {

bool same_kind(const json& want, const json& got) {
  if (want.is_number_float()) return got.is_number();
  if (want.is_number_unsigned()) return got.is_number_unsigned() || (got.is_number_integer() && got.get<std::int64_t>() >= 0);
  if (want.is_number_integer()) return got.is_number_integer();
  return want.type() == got.type();
}

void overlay(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError(path, "config section " + (path.empty() ? "<root>" : path) + " must be an object");
  for (const auto& [key, value] : patch.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    auto it = base.find(key);
    if (it == base.end()) throw UnknownConfigKey(p);
    if (it->is_object()) {
      overlay(*it, value, p);
    } else {
      if (!same_kind(*it, value)) throw ConfigError(p, "config key " + p + " has the wrong type");
      *it = value;
    }
  }
}

json canonical(const Config& c) {
  json j;
  to_json(j, c);
  return j;
}

template <typename F>
void check(const std::string& key, F&& f) {
  try {
    f();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(key, key + ": " + e.what());
  }
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key, key + " " + what);
}

}  // namespace

void Config::resolve() {
  network.grid_n = percept.grid.n;
  network.bound = Action(world.dynamics.limits.v_max, world.dynamics.limits.v_max, world.dynamics.limits.omega_max);
  world.proprio.robot_radius = world.dynamics.robot_radius;
}

void Config::validate() const {
  require(world.width > 0 && world.height > 0, "world", "dimensions must be positive");
  check("world.dynamics.limits", [&] { world.dynamics.limits.validate(); });
  require(world.window >= 3, "world.window", "must be at least 3");
  require(world.lidar.rays > 0 && world.lidar.channels > 0, "world.lidar", "needs at least one ray and channel");
  check("percept.grid", [&] { percept.grid.validate(); });
  check("rewards.reward", [&] { rewards.reward.validate(); });
  require(rewards.holdout > 0 && rewards.holdout < 1, "rewards.holdout", "must lie in (0, 1)");
  check("network", [&] { network.validate(); });
  check("training.cql", [&] { training.cql.validate(); });
  require(training.steps >= 0, "training.steps", "must be non-negative");
  require(training.log_every > 0, "training.log_every", "must be positive");
  check("planner.context", [&] { planner.context.validate(); });
  require(planner.lattice >= 3 && planner.lattice % 2 == 1, "planner.lattice", "must be odd and at least 3");
  require(eval.budget >= 0, "eval.budget", "must be non-negative");
  require(eval.trials >= 1, "eval.trials", "must be positive");
  require(!eval.archetypes.empty(), "eval.archetypes", "must not be empty");
  require(eval.hours > 0, "eval.hours", "must be positive");
  for (const std::string& m : eval.methods) {
    require(m == "vapor" || m == "no-proprio" || m == "no-attention" || m == "straight" || m == "random",
            "eval.methods", "contains unknown method " + m);
  }
}

ObservationContext Config::sensing() const {
  ObservationContext ctx;
  ctx.lidar = world.lidar;
  ctx.proprio = world.proprio;
  ctx.percept = percept;
  ctx.window = world.window;
  return ctx;
}

CollectParams Config::collect() const {
  CollectParams p;
  p.wanderer = world.wanderer;
  p.dynamics = world.dynamics;
  p.sensing = sensing();
  p.bounds = {{0.0, 0.0}, {world.width, world.height}};
  p.seed = mix_seed(seed, 101);
  return p;
}

BuildParams Config::build() const {
  BuildParams p;
  p.rewards = rewards.reward;
  p.segments = rewards.segments;
  p.percept = percept;
  p.seed = mix_seed(seed, 102);
  p.max_transitions = rewards.max_transitions;
  return p;
}

plan::EpisodeParams Config::episode() const {
  plan::EpisodeParams p;
  p.budget = eval.budget;
  p.goal_threshold = rewards.reward.goal_threshold;
  p.dynamics = world.dynamics;
  p.sensing = sensing();
  return p;
}

WorldParams Config::world_params(Archetype a, std::uint64_t s) const {
  WorldParams p;
  p.archetype = a;
  p.seed = s;
  p.bounds = {{0.0, 0.0}, {world.width, world.height}};
  p.robot_radius = world.dynamics.robot_radius;
  return p;
}

Json to_json(const Config& c) { return Json::parse(canonical(c).dump()); }

Config config_from_json(const Json& j) {
  Config defaults;
  defaults.resolve();
  json merged = canonical(defaults);
  overlay(merged, json::parse(j.dump()), "");
  Config c;
  try {
    c = merged.get<Config>();
  } catch (const std::exception& e) {
    throw ConfigError("", std::string("invalid config value: ") + e.what());
  }
  c.resolve();
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot read config " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("", "config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

std::string config_hash(const Config& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical(c).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace vapor
