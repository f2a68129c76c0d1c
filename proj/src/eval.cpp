#include "vapor/eval.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace vapor::eval {

double metric_success(std::span<const plan::EpisodeResult> results) {
  if (results.empty()) throw std::invalid_argument("no episodes to score");
  std::size_t ok = 0;
  for (const auto& r : results) ok += r.outcome == plan::Outcome::Success;
  return 100.0 * static_cast<double>(ok) / static_cast<double>(results.size());
}

double metric_current(std::span<const plan::EpisodeResult> results) {
  if (results.empty()) throw std::invalid_argument("no episodes to score");
  double total = 0.0;
  for (const auto& r : results) {
    if (r.currents.empty()) throw std::invalid_argument("episode has no current samples");
    double s = 0.0;
    for (double c : r.currents) s += c;
    total += s / static_cast<double>(r.currents.size());
  }
  return total / static_cast<double>(results.size());
}

double metric_norm_length(std::span<const plan::EpisodeResult> results) {
  if (results.empty()) throw std::invalid_argument("no episodes to score");
  double total = 0.0;
  for (const auto& r : results) {
    if (!(r.straight_distance > 0.0)) throw std::invalid_argument("straight-line distance must be positive");
    total += r.path_length / r.straight_distance;
  }
  return total / static_cast<double>(results.size());
}

const CellStats& SuiteReport::cell(const std::string& method, Archetype a) const {
  for (const auto& c : cells) {
    if (c.method == method && c.archetype == a) return c;
  }
  throw std::out_of_range("no cell for " + method + "/" + std::string(to_string(a)));
}

std::uint64_t world_seed(std::uint64_t suite_seed, Archetype a, int trial) {
  return mix_seed(mix_seed(suite_seed, static_cast<std::uint64_t>(a)), static_cast<std::uint64_t>(trial));
}

std::uint64_t episode_seed(std::uint64_t ws) { return mix_seed(ws, 7); }

std::unique_ptr<plan::Policy> make_policy(const std::string& method, const Critics& critics,
                                          const plan::PlannerParams& planner, std::uint64_t seed,
                                          std::unique_ptr<plan::ActionScorer>& scorer) {
  if (method == "straight") return std::make_unique<plan::StraightToGoal>(planner.lattice);
  if (method == "random") return std::make_unique<plan::RandomFeasible>(seed, planner.lattice);
  const bool no_proprio = method == "no-proprio";
  const nn::QNetwork<float>* q = method == "no-attention" ? critics.no_attention : critics.vapor;
  if (method != "vapor" && method != "no-proprio" && method != "no-attention") {
    throw std::invalid_argument("unknown method " + method);
  }
  if (q == nullptr) throw std::invalid_argument("method " + method + " needs a trained critic");
  scorer = std::make_unique<plan::CriticScorer>(*q, no_proprio);
  return std::make_unique<plan::ContextPlanner>(*scorer, planner, no_proprio);
}

CellStats summarize(const std::string& method, Archetype a, std::span<const plan::EpisodeResult> results) {
  CellStats c;
  c.method = method;
  c.archetype = a;
  c.episodes = static_cast<int>(results.size());
  c.success = metric_success(results);
  c.current = metric_current(results);
  c.norm_length = metric_norm_length(results);
  double sum = 0.0;
  int n = 0;
  for (const auto& r : results) {
    ++c.outcomes[std::string(plan::to_string(r.outcome))];
    if (r.outcome == plan::Outcome::Success) {
      sum += r.path_length / r.straight_distance;
      ++n;
    }
    for (const auto& s : r.trajectory) {
      if (s.entanglement > 1.0) {
        ++c.entangled_steps;
        c.entangled_holonomic += s.sample_mode == plan::Mode::Holonomic;
      }
      if (s.in_corridor) {
        ++c.corridor_steps;
        c.corridor_nonholonomic += s.sample_mode == plan::Mode::Nonholonomic;
      }
    }
  }
  c.norm_length_success = n > 0 ? sum / n : std::numeric_limits<double>::quiet_NaN();
  return c;
}

SuiteReport run_suite(const SuiteSpec& spec, const plan::EpisodeParams& episode, const plan::PlannerParams& planner,
                      const Critics& critics, const std::string& config_hash,
                      const std::function<void(const EpisodeRecord&)>& sink) {
  if (spec.trials < 1) throw std::invalid_argument("suite needs at least one trial");
  SuiteReport report;
  report.spec = spec;
  report.config_hash = config_hash;
  for (const std::string& method : spec.methods) {
    for (Archetype a : spec.archetypes) {
      std::vector<plan::EpisodeResult> results;
      for (int t = 0; t < spec.trials; ++t) {
        EpisodeRecord rec;
        rec.method = method;
        rec.archetype = a;
        rec.trial = t;
        rec.world_seed = world_seed(spec.seed, a, t);
        rec.episode_seed = episode_seed(rec.world_seed);
        WorldParams wp;
        wp.archetype = a;
        wp.seed = rec.world_seed;
        wp.bounds = {{0.0, 0.0}, {spec.width, spec.height}};
        wp.robot_radius = episode.dynamics.robot_radius;
        const WorldModel world = generate_world(wp);
        std::unique_ptr<plan::ActionScorer> scorer;
        auto policy = make_policy(method, critics, planner, mix_seed(rec.episode_seed, 3), scorer);
        rec.result = plan::run_episode(world, world.mission.start, world.mission.goal, *policy, episode, rec.episode_seed);
        if (sink) sink(rec);
        results.push_back(std::move(rec.result));
      }
      report.cells.push_back(summarize(method, a, results));
    }
  }
  return report;
}

namespace {

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

}  // namespace

Json to_json(const SuiteReport& r) {
  Json j;
  j["config_hash"] = r.config_hash;
  j["seed"] = r.spec.seed;
  j["trials"] = r.spec.trials;
  j["methods"] = r.spec.methods;
  Json arch = Json::array();
  for (Archetype a : r.spec.archetypes) arch.push_back(std::string(to_string(a)));
  j["archetypes"] = arch;
  Json cells = Json::array();
  for (const auto& c : r.cells) {
    Json o;
    o["method"] = c.method;
    o["archetype"] = std::string(to_string(c.archetype));
    o["episodes"] = c.episodes;
    o["success_rate"] = c.success;
    o["avg_current"] = c.current;
    o["norm_length"] = c.norm_length;
    o["norm_length_success"] = number_or_null(c.norm_length_success);
    o["outcomes"] = c.outcomes;
    o["entangled_steps"] = c.entangled_steps;
    o["entangled_holonomic"] = c.entangled_holonomic;
    o["corridor_steps"] = c.corridor_steps;
    o["corridor_nonholonomic"] = c.corridor_nonholonomic;
    cells.push_back(o);
  }
  j["cells"] = cells;
  return j;
}

std::string to_csv(const SuiteReport& r) {
  std::ostringstream os;
  os << std::setprecision(9);
  os << "method,archetype,episodes,success_rate,avg_current,norm_length,norm_length_success\n";
  for (const auto& c : r.cells) {
    os << c.method << ',' << to_string(c.archetype) << ',' << c.episodes << ',' << c.success << ',' << c.current << ','
       << c.norm_length << ',';
    if (std::isfinite(c.norm_length_success)) os << c.norm_length_success;
    os << '\n';
  }
  return os.str();
}

std::string episode_log(const EpisodeRecord& rec) {
  std::string out;
  for (const auto& s : rec.result.trajectory) {
    Json line = plan::to_json(s);
    line["trial"] = rec.trial;
    out += line.dump();
    out += '\n';
  }
  Json summary;
  summary["type"] = "episode";
  summary["method"] = rec.method;
  summary["archetype"] = std::string(to_string(rec.archetype));
  summary["trial"] = rec.trial;
  summary["world_seed"] = rec.world_seed;
  summary["episode_seed"] = rec.episode_seed;
  summary["outcome"] = std::string(plan::to_string(rec.result.outcome));
  summary["steps"] = rec.result.steps;
  summary["path_length"] = rec.result.path_length;
  summary["straight_distance"] = rec.result.straight_distance;
  summary["currents"] = rec.result.currents;
  out += summary.dump();
  out += '\n';
  return out;
}

}  // namespace vapor::eval
