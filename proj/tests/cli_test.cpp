#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "vapor/cql.hpp"
#include "vapor/pipeline.hpp"

namespace vapor {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vapor_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const std::string& args, const fs::path& err) {
  const std::string cmd = std::string(VAPOR_CLI) + " " + args + " > /dev/null 2> " + err.string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, UnknownConfigKeyExitsTwoAndNamesTheKey) {
  const fs::path dir = scratch_dir("unknown");
  std::ofstream(dir / "cfg.json") << R"({"training": {"cql": {"alpha_cq": 2.0}}})";
  EXPECT_EQ(run_cli("--config " + (dir / "cfg.json").string() + " --out " + (dir / "runs").string() + " gen-world",
                    dir / "err.json"),
            2);
  const Json err = Json::parse(slurp(dir / "err.json"));
  EXPECT_EQ(err["error"], "unknown_config_key");
  EXPECT_EQ(err["key"], "training.cql.alpha_cq");
  EXPECT_FALSE(fs::exists(dir / "runs"));
}

TEST(Cli, BadFlagValueIsAUsageError) {
  const fs::path dir = scratch_dir("usage");
  EXPECT_EQ(run_cli("--ablation sideways eval", dir / "err.json"), 2);
  EXPECT_EQ(Json::parse(slurp(dir / "err.json"))["error"], "usage");
}

TEST(Cli, ZeroStepTrainingExportsTheInitialCritic) {
  const fs::path dir = scratch_dir("train0");
  const Json overlay = {{"seed", 11}, {"rewards", {{"max_transitions", 400}}}};
  std::ofstream(dir / "cfg.json") << overlay.dump();
  const std::string base = "--config " + (dir / "cfg.json").string() + " --out " + (dir / "runs").string();
  ASSERT_EQ(run_cli(base + " collect --hours 0.02", dir / "err.json"), 0) << slurp(dir / "err.json");
  ASSERT_EQ(run_cli(base + " make-dataset", dir / "err.json"), 0) << slurp(dir / "err.json");
  ASSERT_EQ(run_cli(base + " --steps 0 train", dir / "err.json"), 0) << slurp(dir / "err.json");

  const Config cfg = config_from_json(overlay);
  const auto run = pipeline::RunDir::open(dir / "runs", config_hash(cfg));
  auto stored = pipeline::load_qmin(cfg, run, pipeline::Ablation::None);
  rl::Trainer fresh(cfg.network, cfg.training.cql, mix_seed(cfg.seed, 104));
  auto init = fresh.export_qmin();
  const auto a = stored.parameters(), b = init.parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i]->value, b[i]->value) << a[i]->name;
}

}  // namespace
}  // namespace vapor
