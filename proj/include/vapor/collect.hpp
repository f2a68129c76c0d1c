#pragma once

#include <cstdint>
#include <vector>

#include "vapor/percept.hpp"
#include "vapor/world_io.hpp"

namespace vapor {

struct WandererParams {
  int max_steps = 600;
  double min_speed = 0.3;
  double max_speed = 1.0;
  double holonomic_share = 0.5;    // chance a leg is driven without rotation
  double goal_share = 0.5;         // chance the next waypoint is the mission goal
  double explore_rate = 0.03;      // per-step chance to start holding a random command
  double noise = 0.15;
  double avoid_distance = 0.9;     // clearance at which solids start to repel
};

struct CollectParams {
  WandererParams wanderer;
  DynamicsParams dynamics;
  ObservationContext sensing;
  Bounds bounds{{0.0, 0.0}, {30.0, 30.0}};
  std::vector<Archetype> archetypes{kAllArchetypes.begin(), kAllArchetypes.end()};
  std::uint64_t seed = 0;
};

/// Scripted smooth random walk toward a sequence of waypoints, in a world of
/// archetype `archetypes[episode % size]`. Stops at collision or immobilization.
Rollout collect_episode(std::uint64_t episode, const CollectParams& params);

/// World used by `collect_episode` for `episode`.
WorldModel collection_world(std::uint64_t episode, const CollectParams& params);

/// Per-step sensing seed shared by collection and evaluation.
inline std::uint64_t sensing_seed(std::uint64_t episode_seed, std::uint64_t step) {
  return mix_seed(episode_seed ^ 0x5e45e45e45e45e4ULL, step);
}

}  // namespace vapor
