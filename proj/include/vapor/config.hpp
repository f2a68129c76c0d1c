#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "vapor/collect.hpp"
#include "vapor/cql.hpp"
#include "vapor/dataset.hpp"
#include "vapor/planner.hpp"

namespace vapor {

struct WorldSection {
  double width = 30.0;
  double height = 30.0;
  DynamicsParams dynamics;
  LidarConfig lidar;
  ProprioParams proprio;
  WandererParams wanderer;
  int window = 32;  // proprioceptive samples per stability window
};

struct RewardsSection {
  RewardParams reward;
  SegmentParams segments;
  std::size_t max_transitions = 50000;
  double holdout = 0.1;
};

struct TrainingSection {
  rl::CqlParams cql;
  long steps = 20000;
  int log_every = 100;
};

struct EvalSection {
  int budget = 600;
  int trials = 20;
  std::vector<Archetype> archetypes{kAllArchetypes.begin(), kAllArchetypes.end()};
  std::vector<std::string> methods{"vapor", "no-proprio", "straight", "random"};
  double hours = 4.0;  // simulated collection time
};

struct Config {
  std::uint64_t seed = 0;
  WorldSection world;
  PerceptParams percept;
  RewardsSection rewards;
  nn::NetworkConfig network;
  TrainingSection training;
  plan::PlannerParams planner;
  EvalSection eval;

  /// Copies shared quantities (grid size, robot radius, velocity bounds) into every consumer.
  void resolve();
  void validate() const;

  ObservationContext sensing() const;
  CollectParams collect() const;
  BuildParams build() const;
  plan::EpisodeParams episode() const;
  WorldParams world_params(Archetype a, std::uint64_t seed) const;
};

/// Thrown for keys the schema does not know; `key` is the dotted path.
class UnknownConfigKey : public std::runtime_error {
 public:
  explicit UnknownConfigKey(std::string key) : std::runtime_error("unknown config key: " + key), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what) : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

Json to_json(const Config& c);
/// Overlays `j` on the defaults; every key must exist in the default tree with a matching type.
Config config_from_json(const Json& j);
Config load_config(const std::filesystem::path& path);

/// 16 hex digits of FNV-1a over the canonical serialization.
std::string config_hash(const Config& c);

}  // namespace vapor
