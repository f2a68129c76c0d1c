#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "vapor/planner.hpp"

namespace vapor::eval {

double metric_success(std::span<const plan::EpisodeResult> results);
/// Mean over episodes of the per-episode mean battery current.
double metric_current(std::span<const plan::EpisodeResult> results);
/// Mean over all episodes of path length / straight-line distance.
double metric_norm_length(std::span<const plan::EpisodeResult> results);

struct SuiteSpec {
  std::vector<std::string> methods;
  std::vector<Archetype> archetypes;
  int trials = 20;
  std::uint64_t seed = 0;
  double width = 30.0;
  double height = 30.0;
};

/// Critics available to the learned methods; "no-attention" needs its own gate-free network.
struct Critics {
  const nn::QNetwork<float>* vapor = nullptr;
  const nn::QNetwork<float>* no_attention = nullptr;
};

struct EpisodeRecord {
  std::string method;
  Archetype archetype = Archetype::UniformRandom;
  int trial = 0;
  std::uint64_t world_seed = 0;
  std::uint64_t episode_seed = 0;
  plan::EpisodeResult result;
};

struct CellStats {
  std::string method;
  Archetype archetype = Archetype::UniformRandom;
  int episodes = 0;
  double success = 0.0;
  double current = 0.0;
  double norm_length = 0.0;
  double norm_length_success = 0.0;  // NaN when nothing succeeded
  std::map<std::string, int> outcomes;
  long entangled_steps = 0;           // steps with entanglement > 1
  long entangled_holonomic = 0;
  long corridor_steps = 0;
  long corridor_nonholonomic = 0;
};

struct SuiteReport {
  SuiteSpec spec;
  std::string config_hash;
  std::vector<CellStats> cells;  // method-major, archetype-minor

  const CellStats& cell(const std::string& method, Archetype a) const;
};

std::uint64_t world_seed(std::uint64_t suite_seed, Archetype a, int trial);
std::uint64_t episode_seed(std::uint64_t world_seed);

std::unique_ptr<plan::Policy> make_policy(const std::string& method, const Critics& critics,
                                          const plan::PlannerParams& planner, std::uint64_t seed,
                                          std::unique_ptr<plan::ActionScorer>& scorer);

CellStats summarize(const std::string& method, Archetype a, std::span<const plan::EpisodeResult> results);

/// Runs every (method, archetype, trial) in that order; `sink` sees each finished episode.
SuiteReport run_suite(const SuiteSpec& spec, const plan::EpisodeParams& episode, const plan::PlannerParams& planner,
                      const Critics& critics, const std::string& config_hash,
                      const std::function<void(const EpisodeRecord&)>& sink = {});

Json to_json(const SuiteReport& r);
std::string to_csv(const SuiteReport& r);
/// Per-step JSON lines followed by one summary line.
std::string episode_log(const EpisodeRecord& rec);

}  // namespace vapor::eval
