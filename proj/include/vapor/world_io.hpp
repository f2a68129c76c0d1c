#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vapor/world.hpp"

namespace vapor {

using Json = nlohmann::ordered_json;

Json to_json(const WorldModel& world);
WorldModel world_from_json(const Json& j);

void save_world(const std::filesystem::path& path, const WorldModel& world, const std::string& config_hash = "");
WorldModel load_world(const std::filesystem::path& path);

struct StepFlags {
  bool collision = false;
  bool immobilized = false;
  bool clamped = false;
};

/// One logged control step: the state and sensing before acting, the applied
/// command, and what the step cost. The final record of an episode has no action.
struct StepRecord {
  double t = 0.0;
  Pose2 pose;
  Action velocity = Action::Zero();
  bool has_action = false;
  Action action = Action::Zero();
  double entanglement = 0.0;
  double current = 0.0;
  StepFlags flags;
  PointCloud cloud;
  std::vector<ProprioSample> proprio;
};

struct Rollout {
  std::uint64_t episode = 0;
  std::uint64_t world_seed = 0;
  Archetype archetype = Archetype::UniformRandom;
  std::vector<StepRecord> steps;
};

/// Writes `<stem>.jsonl` with `<stem>.points.bin` (float32 x4 per point) and
/// `<stem>.proprio.bin` (float64 x13 per sample) side-cars.
void write_rollout(const std::filesystem::path& stem, const Rollout& rollout, const std::string& config_hash = "");

/// Reads a rollout back as contiguous runs of valid records. Unparsable or
/// inconsistent records are dropped, added to `skipped`, and split the run.
std::vector<Rollout> read_rollout(const std::filesystem::path& stem, int& skipped);

}  // namespace vapor
