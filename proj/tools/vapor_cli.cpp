#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "vapor/pipeline.hpp"

using namespace vapor;
namespace pl = vapor::pipeline;

namespace {

int fail(const std::string& kind, const std::string& message, int code, const std::string& key = "") {
  Json e = {{"error", kind}, {"message", message}};
  if (!key.empty()) e["key"] = key;
  std::cerr << e.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"VAPOR desk-scale navigation pipeline"};
  app.require_subcommand(1, 1);
  std::string config_path, out = "runs", ablation = "none";
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::optional<long> steps;
  double hours = 4.0;
  app.add_option("--config", config_path, "JSON config overlaying the defaults")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Master seed");
  app.add_option("--out", out, "Root of the run directories")->capture_default_str();
  app.add_option("--trials", trials, "Episodes per archetype for eval and gen-world");
  app.add_option("--steps", steps, "Training steps, or closed-loop steps for plan-step");
  app.add_option("--ablation", ablation, "none, no-proprio or no-attention")
      ->check(CLI::IsMember({"none", "no-proprio", "no-attention"}))
      ->capture_default_str();

  auto* gen_world = app.add_subcommand("gen-world", "Write the evaluation worlds");
  auto* collect = app.add_subcommand("collect", "Scripted-wanderer rollouts");
  collect->add_option("--hours", hours, "Simulated hours to collect")->capture_default_str();
  auto* make_dataset = app.add_subcommand("make-dataset", "Segment rollouts into transitions");
  auto* train = app.add_subcommand("train", "Offline CQL-SAC training");
  auto* eval_cmd = app.add_subcommand("eval", "Closed-loop evaluation suite");
  auto* plan_step = app.add_subcommand("plan-step", "Print scored lattices for a few closed-loop steps");
  auto* oracle = app.add_subcommand("oracle", "Brute-force oracle checks");
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    Config cfg = config_path.empty() ? config_from_json(Json::object()) : load_config(config_path);
    if (seed) cfg.seed = *seed;
    const std::string base_hash = config_hash(cfg);
    const pl::Ablation abl = pl::ablation_from_string(ablation);
    if (trials) {
      if (*trials < 1) throw ConfigError("--trials", "--trials must be positive");
      cfg.eval.trials = *trials;
    }
    if (steps && *steps < 0) throw ConfigError("--steps", "--steps must be non-negative");
    if (steps && train->parsed()) cfg.training.steps = *steps;
    if (train->parsed() && abl == pl::Ablation::NoAttention) cfg.network.attention = false;
    const std::string hash = config_hash(cfg);

    if (oracle->parsed()) {
      const Json r = pl::oracle(cfg.seed);
      for (const auto& c : r["checks"]) {
        std::cout << (c["passed"].get<bool>() ? "PASS " : "FAIL ") << c["check"].get<std::string>() << ' '
                  << c["detail"].dump() << '\n';
      }
      return r["passed"].get<bool>() ? 0 : 1;
    }

    const pl::RunDir run = pl::RunDir::open(out, base_hash);
    Json summary;
    std::string command;
    if (gen_world->parsed()) {
      command = "gen-world";
      summary = pl::gen_world(cfg, run, hash);
    } else if (collect->parsed()) {
      command = "collect";
      summary = pl::collect(cfg, run, hash, hours);
    } else if (make_dataset->parsed()) {
      command = "make-dataset";
      summary = pl::make_dataset(cfg, run, hash);
    } else if (train->parsed()) {
      command = "train" + pl::suffix(abl);
      summary = pl::train(cfg, run, hash, abl);
    } else if (eval_cmd->parsed()) {
      command = "eval-" + pl::to_string(abl);
      summary = pl::evaluate(cfg, run, hash, abl);
      summary.erase("cells");
    } else if (plan_step->parsed()) {
      command = "plan-step";
      summary = pl::plan_step(cfg, run, steps ? static_cast<int>(*steps) : 1, std::cout);
    }
    run.record(command, summary, cfg, hash);
    Json done = {{"command", command}, {"run", run.root.string()}, {"config_hash", hash}};
    if (!plan_step->parsed()) done["summary"] = summary;
    std::cout << done.dump() << std::endl;
    return 0;
  } catch (const UnknownConfigKey& e) {
    return fail("unknown_config_key", e.what(), 2, e.key());
  } catch (const ConfigError& e) {
    return fail("config_error", e.what(), 2, e.key());
  } catch (const std::invalid_argument& e) {
    return fail("invalid_argument", e.what(), 2);
  } catch (const std::exception& e) {
    return fail("runtime_error", e.what(), 1);
  }
}
