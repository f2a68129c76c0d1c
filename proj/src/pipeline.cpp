#include "vapor/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "vapor/checkpoint.hpp"
#include "vapor/checks.hpp"

namespace vapor::pipeline {

namespace {

constexpr const char* kVersion = "0.1.0";

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return Json::parse(in);
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

std::uint64_t suite_seed(const Config& cfg) { return mix_seed(cfg.seed, 200); }

Json breakdown(const RewardBreakdown& r, double scale = 1.0) {
  return {{"goal", r.goal * scale}, {"veg", r.veg * scale}, {"energy", r.energy * scale}, {"total", r.total * scale}};
}

std::string pad(std::size_t i) {
  std::ostringstream os;
  os << std::setw(5) << std::setfill('0') << i;
  return os.str();
}

std::vector<fs::path> rollout_stems(const fs::path& dir) {
  std::vector<fs::path> stems;
  if (!fs::exists(dir)) return stems;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") stems.push_back(e.path().parent_path() / e.path().stem());
  }
  std::sort(stems.begin(), stems.end());
  return stems;
}

Json action_json(const Action& a) { return Json::array({a.x(), a.y(), a.z()}); }

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

RunDir RunDir::open(const fs::path& out, const std::string& hash) {
  fs::create_directories(out);
  std::string best;
  const std::string tail = "-" + hash;
  for (const auto& e : fs::directory_iterator(out)) {
    const std::string name = e.path().filename().string();
    if (e.is_directory() && name.size() > tail.size() && name.ends_with(tail)) best = std::max(best, name);
  }
  if (best.empty()) {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y%m%dT%H%M%SZ") << tail;
    best = os.str();
  }
  RunDir run{out / best};
  for (const fs::path& d : {run.world(), run.logs(), run.dataset(), run.ckpt(), run.reports()}) fs::create_directories(d);
  return run;
}

void RunDir::record(const std::string& command, const Json& summary, const Config& cfg, const std::string& hash) const {
  const fs::path path = root / "manifest.json";
  Json m = fs::exists(path) ? read_json(path) : Json::object();
  m["version"] = kVersion;
  m["seed"] = cfg.seed;
  m["commands"][command] = summary;
  m["commands"][command]["config_hash"] = hash;
  m["commands"][command]["config"] = to_json(cfg);
  write_json(path, m);
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::None;
  if (s == "no-proprio") return Ablation::NoProprio;
  if (s == "no-attention") return Ablation::NoAttention;
  throw std::invalid_argument("unknown ablation " + s);
}

std::string to_string(Ablation a) {
  switch (a) {
    case Ablation::None: return "none";
    case Ablation::NoProprio: return "no-proprio";
    case Ablation::NoAttention: return "no-attention";
  }
  return "none";
}

std::string suffix(Ablation a) { return a == Ablation::NoAttention ? "-no-attention" : ""; }

nn::NetworkConfig network_for(const Config& cfg, Ablation a) {
  nn::NetworkConfig n = cfg.network;
  if (a == Ablation::NoAttention) n.attention = false;
  return n;
}

Json gen_world(const Config& cfg, const RunDir& run, const std::string& hash) {
  Json worlds = Json::array();
  for (Archetype a : cfg.eval.archetypes) {
    for (int t = 0; t < cfg.eval.trials; ++t) {
      const std::uint64_t seed = eval::world_seed(suite_seed(cfg), a, t);
      const WorldModel w = generate_world(cfg.world_params(a, seed));
      const std::string name = std::string(to_string(a)) + "-" + pad(static_cast<std::size_t>(t)) + ".json";
      save_world(run.world() / name, w, hash);
      worlds.push_back({{"file", name}, {"seed", seed}, {"entities", w.entities.size()}});
    }
  }
  return {{"worlds", worlds}};
}

Json collect(const Config& cfg, const RunDir& run, const std::string& hash, double hours) {
  if (!(hours > 0.0)) throw std::invalid_argument("--hours must be positive");
  const fs::path dir = run.logs() / "rollouts";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const CollectParams params = cfg.collect();
  const double dt = params.dynamics.limits.dt;
  const long target = static_cast<long>(std::ceil(hours * 3600.0 / dt));
  long steps = 0;
  std::size_t episode = 0;
  std::map<std::string, long> per_archetype;
  int collisions = 0, immobilized = 0;
  while (steps < target) {
    const Rollout r = collect_episode(episode, params);
    write_rollout(dir / ("episode-" + pad(episode)), r, hash);
    const long n = r.steps.empty() ? 0 : static_cast<long>(r.steps.size()) - 1;
    steps += n;
    per_archetype[std::string(to_string(r.archetype))] += n;
    if (!r.steps.empty()) {
      collisions += r.steps.back().flags.collision;
      immobilized += r.steps.back().flags.immobilized;
    }
    ++episode;
    if (n == 0 && episode > 1000 && steps == 0) throw std::runtime_error("collection produces no steps");
  }
  const Json summary = {{"config_hash", hash},
                        {"episodes", episode},
                        {"steps", steps},
                        {"simulated_hours", static_cast<double>(steps) * dt / 3600.0},
                        {"steps_per_archetype", per_archetype},
                        {"collisions", collisions},
                        {"immobilized", immobilized}};
  write_json(run.logs() / "collect.json", summary);
  return summary;
}

Json make_dataset(const Config& cfg, const RunDir& run, const std::string& hash) {
  const auto stems = rollout_stems(run.logs() / "rollouts");
  if (stems.empty()) throw std::runtime_error("no rollouts in " + (run.logs() / "rollouts").string() + "; run collect first");
  const BuildParams params = cfg.build();
  const Json full = to_json(cfg);
  const Json header = {{"config_hash", hash},
                       {"rewards", full["rewards"]},
                       {"percept", full["percept"]},
                       {"seed", params.seed}};
  DatasetWriter writer(run.dataset() / "transitions.bin", cfg.percept.grid, header.dump());
  BuildStats stats;
  std::size_t files = 0;
  bool more = true;
  for (const fs::path& stem : stems) {
    int skipped = 0;
    const auto runs = read_rollout(stem, skipped);
    stats.skipped_records += skipped;
    ++files;
    for (const Rollout& r : runs) {
      if (!(more = build_rollout(r, params, writer, stats))) break;
    }
    if (!more) break;
  }
  writer.close();
  if (writer.count() == 0) throw std::runtime_error("dataset is empty");
  const double n = static_cast<double>(stats.transitions);
  const Json manifest = {{"config_hash", hash},
                         {"transitions", writer.count()},
                         {"grid_n", cfg.percept.grid.n},
                         {"beta", cfg.percept.grid.beta},
                         {"rollout_files", files},
                         {"episodes", stats.episodes},
                         {"segments", stats.segments},
                         {"done", stats.done},
                         {"skipped_records", stats.skipped_records},
                         {"seed", params.seed},
                         {"reward_mean", breakdown(stats.sum, 1.0 / n)},
                         {"reward_min", breakdown(stats.min)},
                         {"reward_max", breakdown(stats.max)}};
  write_json(run.dataset() / "manifest.json", manifest);
  return manifest;
}

Json train(const Config& cfg, const RunDir& run, const std::string& hash, Ablation ablation) {
  if (ablation == Ablation::NoProprio) {
    throw std::invalid_argument("no-proprio is an evaluation-time ablation; train with none");
  }
  const nn::NetworkConfig net = network_for(cfg, ablation);
  const TrainingSet all = load_training_set(run.dataset() / "transitions.bin", run.dataset() / "manifest.json", net);
  auto [train_set, held_out] = all.split(cfg.rewards.holdout, mix_seed(cfg.seed, 103));
  rl::Trainer trainer(net, cfg.training.cql, mix_seed(cfg.seed, 104));

  const std::string sfx = suffix(ablation);
  std::ostringstream log;
  rl::write_log_header(log);
  for (long i = 0; i < cfg.training.steps; ++i) {
    const rl::StepLog row = trainer.step(train_set);
    if (row.step % cfg.training.log_every == 0 || i + 1 == cfg.training.steps) rl::write_log_row(log, row);
  }
  write_text(run.logs() / ("train" + sfx + ".csv"), log.str());

  const Json full = to_json(cfg);
  auto stamp = [&](Checkpoint& c) {
    c.meta["config_hash"] = hash;
    c.meta["ablation"] = to_string(ablation);
    c.meta["config"] = full;
  };
  Checkpoint state = trainer.checkpoint();
  stamp(state);
  save_checkpoint(run.ckpt() / ("trainer" + sfx + ".ckpt"), state);
  Checkpoint qmin = rl::qmin_checkpoint(trainer);
  stamp(qmin);
  save_checkpoint(run.ckpt() / ("qmin" + sfx + ".ckpt"), qmin);

  nn::QNetwork<float> q = trainer.export_qmin();
  const rl::QGap gap = rl::conservatism_gap(q, held_out, mix_seed(cfg.seed, 105));
  const Json report = {{"config_hash", hash},
                       {"ablation", to_string(ablation)},
                       {"steps", trainer.steps()},
                       {"train_transitions", train_set.size()},
                       {"held_out_transitions", held_out.size()},
                       {"alpha", trainer.alpha()},
                       {"window_loss", {trainer.window_loss(0), trainer.window_loss(1)}},
                       {"qmin", trainer.qmin_index() == 0 ? "q1" : "q2"},
                       {"held_out_q_data", gap.q_data},
                       {"held_out_q_uniform", gap.q_uniform},
                       {"held_out_gap", gap.gap()}};
  write_json(run.reports() / ("train" + sfx + ".json"), report);
  return report;
}

nn::QNetwork<float> load_qmin(const Config& cfg, const RunDir& run, Ablation ablation) {
  const fs::path path = run.ckpt() / ("qmin" + suffix(ablation) + ".ckpt");
  if (!fs::exists(path)) throw std::runtime_error("missing checkpoint " + path.string() + "; run train first");
  const Checkpoint c = load_checkpoint(path);
  const Json full = to_json(cfg);
  const Json& stored = c.meta.at("config");
  if (stored.at("percept").at("grid") != full["percept"]["grid"]) {
    throw std::runtime_error("checkpoint/config mismatch: percept grid");
  }
  Json want = full["network"];
  if (ablation == Ablation::NoAttention) want["attention"] = false;
  Json have = stored.at("network");
  if (c.meta.at("ablation") == "no-attention") have["attention"] = false;
  if (have != want) throw std::runtime_error("checkpoint/config mismatch: network");
  return rl::load_critic(c, "qmin", network_for(cfg, ablation));
}

Json evaluate(const Config& cfg, const RunDir& run, const std::string& hash, Ablation ablation) {
  eval::SuiteSpec spec;
  switch (ablation) {
    case Ablation::None: spec.methods = cfg.eval.methods; break;
    case Ablation::NoProprio: spec.methods = {"vapor", "no-proprio"}; break;
    case Ablation::NoAttention: spec.methods = {"vapor", "no-attention"}; break;
  }
  spec.archetypes = cfg.eval.archetypes;
  spec.trials = cfg.eval.trials;
  spec.seed = suite_seed(cfg);
  spec.width = cfg.world.width;
  spec.height = cfg.world.height;

  auto uses = [&](std::initializer_list<const char*> names) {
    return std::any_of(spec.methods.begin(), spec.methods.end(), [&](const std::string& m) {
      return std::any_of(names.begin(), names.end(), [&](const char* n) { return m == n; });
    });
  };
  std::optional<nn::QNetwork<float>> vapor_q, plain_q;
  if (uses({"vapor", "no-proprio"})) vapor_q = load_qmin(cfg, run, Ablation::None);
  if (uses({"no-attention"})) plain_q = load_qmin(cfg, run, Ablation::NoAttention);
  eval::Critics critics{vapor_q ? &*vapor_q : nullptr, plain_q ? &*plain_q : nullptr};

  const std::string tag = "eval-" + to_string(ablation);
  std::map<std::string, std::string> logs;
  const eval::SuiteReport report =
      eval::run_suite(spec, cfg.episode(), cfg.planner, critics, hash, [&](const eval::EpisodeRecord& rec) {
        logs[rec.method + "-" + std::string(to_string(rec.archetype)) + ".jsonl"] += eval::episode_log(rec);
      });
  const fs::path log_dir = run.logs() / tag;
  fs::remove_all(log_dir);
  for (const auto& [name, text] : logs) write_text(log_dir / name, text);
  const Json j = eval::to_json(report);
  write_json(run.reports() / (tag + ".json"), j);
  write_text(run.reports() / (tag + ".csv"), eval::to_csv(report));
  return j;
}

Json plan_step(const Config& cfg, const RunDir& run, int steps, std::ostream& out) {
  const Archetype a = cfg.eval.archetypes.front();
  const std::uint64_t ws = eval::world_seed(suite_seed(cfg), a, 0);
  const WorldModel world = generate_world(cfg.world_params(a, ws));
  plan::CriticScorer scorer(load_qmin(cfg, run, Ablation::None));
  plan::ContextPlanner planner(scorer, cfg.planner);
  plan::EpisodeParams ep = cfg.episode();
  ep.budget = steps;
  const auto result = plan::run_episode(world, world.mission.start, world.mission.goal, planner, ep,
                                        eval::episode_seed(ws), [&](int k, const RobotState& robot, const plan::Decision& d) {
    Json lattice = Json::array();
    for (const auto& s : d.lattice) {
      lattice.push_back({{"a", action_json(s.a)}, {"q", s.q}, {"mode", plan::to_string(s.mode)}});
    }
    const Json line = {{"step", k},
                       {"pose", {robot.pose.x, robot.pose.y, robot.pose.theta}},
                       {"velocity", action_json(robot.velocity)},
                       {"condition", d.condition},
                       {"mode", plan::to_string(d.mode)},
                       {"chosen", {{"a", action_json(d.chosen.a)}, {"q", d.chosen.q}, {"mode", plan::to_string(d.chosen.mode)}}},
                       {"lattice", lattice}};
    out << line.dump() << '\n';
  });
  return {{"archetype", std::string(to_string(a))},
          {"world_seed", ws},
          {"steps", result.steps},
          {"outcome", std::string(plan::to_string(result.outcome))}};
}

Json oracle(std::uint64_t seed) {
  const std::vector<checks::CheckResult> results = {checks::cost_maps(mix_seed(seed, 1)), checks::pca(mix_seed(seed, 2)),
                                                    checks::gradients({1, 2, 3})};
  Json j = {{"passed", true}, {"checks", Json::array()}};
  for (const auto& r : results) {
    j["checks"].push_back(checks::to_json(r));
    if (!r.passed) j["passed"] = false;
  }
  return j;
}

}  // namespace vapor::pipeline
