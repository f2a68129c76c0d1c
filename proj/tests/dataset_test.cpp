#include "vapor/dataset.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>

#include <gtest/gtest.h>

#include "vapor/collect.hpp"

namespace vapor {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vapor_dataset_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

double brute_veg(const Eigen::MatrixXd& c, const GridSpec& g, const RewardParams& p) {
  double r = 0.0;
  for (int k = 0; k < 3; ++k) {
    double sum = 0.0;
    int count = 0;
    for (int l = 0; l < g.n; ++l) {
      for (int m = 0; m < g.n; ++m) {
        const double x = (l - g.n / 2 + 0.5) * g.beta, y = (m - g.n / 2 + 0.5) * g.beta;
        if (x * x + y * y <= p.radii[k] * p.radii[k]) {
          sum += c(l, m);
          ++count;
        }
      }
    }
    if (count > 0) r -= p.eta[k] * sum / count;
  }
  return r;
}

TEST(Reward, GoalTermExamples) {
  RewardParams p;
  EXPECT_DOUBLE_EQ(r_goal(0.3, 10.0, p), 20.0);
  EXPECT_DOUBLE_EQ(r_goal(0.5, 10.0, p), 20.0);
  EXPECT_DOUBLE_EQ(r_goal(2.0, 10.0, p), 2.5);
  EXPECT_DOUBLE_EQ(r_goal(0.6, 12.0, p), 0.5 * 12.0 / 0.6);
  p.goal_threshold = 2.0;
  EXPECT_DOUBLE_EQ(r_goal(0.2, 10.0, p), 20.0);
  p.lambda_reached = 1.0;
  EXPECT_DOUBLE_EQ(r_goal(2.5, 10.0, p), 2.0);
}

TEST(Reward, GoalTermGrowsAsTheGoalNears) {
  RewardParams p;
  double prev = 0.0;
  for (double d = 15.0; d > p.goal_threshold; d -= 0.25) {
    const double r = r_goal(d, 15.0, p);
    EXPECT_GT(r, prev);
    prev = r;
  }
}

TEST(Reward, VegetationTermMatchesBruteForce) {
  GridSpec g;
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    RewardParams p;
    p.radii = {uniform(rng, 0.1, 1.0), uniform(rng, 1.0, 2.0), uniform(rng, 2.0, 4.0)};
    const Eigen::MatrixXd c = Eigen::MatrixXd::NullaryExpr(g.n, g.n, [&] { return uniform(rng, 0.0, 100.0); });
    EXPECT_NEAR(r_veg(c, g, p), brute_veg(c, g, p), 1e-9);
  }
}

TEST(Reward, VegetationTermIsZeroOnClearGround) {
  GridSpec g;
  EXPECT_EQ(r_veg(Eigen::MatrixXd::Zero(g.n, g.n), g, RewardParams{}), 0.0);
  const double full = r_veg(Eigen::MatrixXd::Constant(g.n, g.n, 100.0), g, RewardParams{});
  EXPECT_NEAR(full, -100.0 * (1.0 + 0.5 + 0.25), 1e-9);
}

TEST(Reward, NeighborhoodsAreNestedDiscs) {
  GridSpec g;
  const auto a = neighborhood(g, 0.5), b = neighborhood(g, 1.5);
  EXPECT_EQ(a.size(), 12u);
  EXPECT_LT(a.size(), b.size());
  for (const auto& c : a) EXPECT_NE(std::find(b.begin(), b.end(), c), b.end());
}

TEST(Reward, EnergyAndTotal) {
  RewardParams p;
  p.beta_goal = 2.0;
  p.beta_veg = 0.5;
  p.beta_energy = 3.0;
  GridSpec g;
  const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(g.n, g.n, 10.0);
  const RewardBreakdown r = reward(4.0, 8.0, c, 3.5, g, p);
  EXPECT_DOUBLE_EQ(r.energy, -0.35);
  EXPECT_DOUBLE_EQ(r.goal, 1.0);
  EXPECT_NEAR(r.veg, -17.5, 1e-12);
  EXPECT_DOUBLE_EQ(r.total, 2.0 * r.goal + 0.5 * r.veg + 3.0 * r.energy);
}

TEST(Reward, RejectsBadWeights) {
  RewardParams p;
  EXPECT_NO_THROW(p.validate());
  p.eta = {1.0, 1.0, 0.5};
  EXPECT_THROW(p.validate(), std::invalid_argument);
  p = {};
  p.epsilon = 0.0;
  EXPECT_THROW(p.validate(), std::invalid_argument);
}

std::vector<Vec2> random_walk(Rng& rng, int n) {
  std::vector<Vec2> out{Vec2::Zero()};
  double heading = 0.0;
  for (int i = 1; i < n; ++i) {
    heading += gaussian(rng, 0.0, 0.2);
    out.push_back(out.back() + 0.08 * Vec2(std::cos(heading), std::sin(heading)));
  }
  return out;
}

TEST(Segmentation, SegmentsRespectDistanceAndLength) {
  Rng walk_rng(9);
  SegmentParams p;
  p.segments_per_step = 0.05;
  std::size_t total = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto pos = random_walk(walk_rng, 800);
    Rng rng(static_cast<std::uint64_t>(trial));
    for (const Segment& s : segment(pos, p, rng)) {
      ASSERT_LT(s.start, s.goal);
      EXPECT_LE(s.goal - s.start, p.max_steps);
      const double d = (pos[s.goal] - pos[s.start]).norm();
      EXPECT_GE(d, p.min_distance);
      EXPECT_LE(d, p.max_distance);
      ++total;
    }
  }
  EXPECT_GT(total, 100u);
}

TEST(Segmentation, DeterministicAndDegenerateInputs) {
  Rng walk_rng(2);
  const auto pos = random_walk(walk_rng, 600);
  Rng a(5), b(5);
  EXPECT_EQ(segment(pos, SegmentParams{}, a), segment(pos, SegmentParams{}, b));
  std::vector<Vec2> still(100, Vec2(1.0, 1.0));
  EXPECT_TRUE(segment(still, SegmentParams{}, a).empty());
  EXPECT_TRUE(segment(std::span<const Vec2>(still).first(1), SegmentParams{}, a).empty());
}

class VectorSink : public TransitionSink {
 public:
  void add(const Transition& t) override { items.push_back(t); }
  std::vector<Transition> items;
};

class BuildFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    CollectParams cp;
    cp.seed = 3;
    cp.wanderer.max_steps = 400;
    rollout_ = new Rollout(collect_episode(1, cp));
  }
  static void TearDownTestSuite() {
    delete rollout_;
    rollout_ = nullptr;
  }
  static BuildParams params() {
    BuildParams p;
    p.seed = 11;
    p.segments.segments_per_step = 0.01;
    p.max_transitions = 300;
    return p;
  }
  static Rollout* rollout_;
};

Rollout* BuildFixture::rollout_ = nullptr;

TEST_F(BuildFixture, TransitionsChainWithinSegments) {
  VectorSink sink;
  BuildStats stats;
  build_rollout(*rollout_, params(), sink, stats);
  ASSERT_GT(sink.items.size(), 10u);
  EXPECT_EQ(stats.transitions, sink.items.size());
  const RewardParams rp = params().rewards;
  std::size_t dones = 0;
  for (std::size_t i = 0; i < sink.items.size(); ++i) {
    const Transition& t = sink.items[i];
    EXPECT_FLOAT_EQ(static_cast<float>(t.r.goal), static_cast<float>(r_goal(t.meta.d_g, t.meta.d_tot, rp)));
    EXPECT_EQ(t.r.total, rp.beta_goal * t.r.goal + rp.beta_veg * t.r.veg + rp.beta_energy * t.r.energy);
    EXPECT_NEAR(t.r.veg, r_veg(t.next.maps.intensity, t.next.maps.grid, rp), 1e-4 * (1.0 + std::abs(t.r.veg)));
    EXPECT_DOUBLE_EQ(t.r.energy, static_cast<float>(-rp.epsilon * t.meta.current));
    dones += t.done;
    if (!t.done && i + 1 < sink.items.size()) {
      EXPECT_EQ(t.next.maps.intensity, sink.items[i + 1].s.maps.intensity);
      EXPECT_EQ(t.next.maps.goal, sink.items[i + 1].s.maps.goal);
      EXPECT_EQ(t.meta.d_tot, sink.items[i + 1].meta.d_tot);
    }
  }
  EXPECT_EQ(dones, stats.done);
  EXPECT_GE(dones, stats.segments - 1);
}

TEST_F(BuildFixture, ActionsAreTheLoggedVelocities) {
  VectorSink sink;
  BuildStats stats;
  build_rollout(*rollout_, params(), sink, stats);
  for (const Transition& t : sink.items) {
    bool found = false;
    for (const auto& s : rollout_->steps) found = found || (s.has_action && s.action == t.a);
    EXPECT_TRUE(found);
  }
}

TEST_F(BuildFixture, CapStopsTheBuild) {
  VectorSink sink;
  BuildStats stats;
  BuildParams p = params();
  p.max_transitions = 7;
  EXPECT_FALSE(build_rollout(*rollout_, p, sink, stats));
  EXPECT_EQ(sink.items.size(), 7u);
}

TEST_F(BuildFixture, FileRoundTripAndByteDeterminism) {
  const fs::path dir = scratch_dir("roundtrip");
  const GridSpec g = params().percept.grid;
  VectorSink mem;
  for (const char* name : {"a.bin", "b.bin"}) {
    DatasetWriter w(dir / name, g, "{\"k\":1}");
    BuildStats stats, mem_stats;
    build_rollout(*rollout_, params(), w, stats);
    if (mem.items.empty()) build_rollout(*rollout_, params(), mem, mem_stats);
    w.close();
    EXPECT_EQ(w.count(), mem.items.size());
  }
  EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));

  DatasetReader r(dir / "a.bin");
  EXPECT_EQ(r.header().n, static_cast<std::uint32_t>(g.n));
  EXPECT_EQ(r.header().beta, g.beta);
  EXPECT_EQ(r.header().params_json, "{\"k\":1}");
  ASSERT_EQ(r.count(), mem.items.size());
  const std::size_t header = 8 + 4 + 4 + 8 + 8 + 4 + 7;
  EXPECT_EQ(fs::file_size(dir / "a.bin"), header + r.count() * record_size(g.n));
  TransitionRecord rec;
  for (const Transition& t : mem.items) {
    ASSERT_TRUE(r.next(rec));
    const TransitionRecord want = to_record(t);
    EXPECT_EQ(rec.maps, want.maps);
    EXPECT_EQ(rec.next_maps, want.next_maps);
    EXPECT_EQ(rec.action, want.action);
    EXPECT_EQ(rec.reward, want.reward);
    EXPECT_EQ(rec.stability, want.stability);
    EXPECT_EQ(rec.done, want.done);
    EXPECT_EQ(rec.reward[0], static_cast<float>(static_cast<double>(rec.reward[1]) + rec.reward[2] + rec.reward[3]));
  }
  EXPECT_FALSE(r.next(rec));
}

TEST_F(BuildFixture, ManifestMustMatch) {
  const fs::path dir = scratch_dir("manifest");
  const GridSpec g = params().percept.grid;
  DatasetWriter w(dir / "d.bin", g, "{}");
  BuildStats stats;
  build_rollout(*rollout_, params(), w, stats);
  w.close();
  nn::NetworkConfig cfg;
  auto write_manifest = [&](std::size_t n) {
    std::ofstream(dir / "m.json") << Json{{"transitions", n}, {"grid_n", g.n}}.dump();
  };
  write_manifest(w.count());
  const TrainingSet set = load_training_set(dir / "d.bin", dir / "m.json", cfg);
  EXPECT_EQ(set.size(), w.count());
  EXPECT_EQ(set.extero.size(), set.size() * static_cast<std::size_t>(cfg.extero_width()));
  write_manifest(w.count() + 1);
  EXPECT_THROW(load_training_set(dir / "d.bin", dir / "m.json", cfg), std::runtime_error);
}

TEST_F(BuildFixture, TrainingSetMatchesDirectPooling) {
  nn::NetworkConfig cfg;
  TrainingSet set;
  TrainingSetSink sink(set, cfg);
  VectorSink mem;
  BuildStats stats, mem_stats;
  build_rollout(*rollout_, params(), sink, stats);
  build_rollout(*rollout_, params(), mem, mem_stats);
  ASSERT_EQ(set.size(), mem.items.size());
  for (std::size_t i = 0; i < set.size(); i += 37) {
    const auto pooled = nn::pool_maps<float>(mem.items[i].s.maps, cfg);
    for (int c = 0; c < set.width; ++c) EXPECT_EQ(set.extero[i * set.width + c], pooled(0, c));
    const auto pf = nn::proprio_features<float>(mem.items[i].s.stability);
    EXPECT_EQ(set.proprio[2 * i], pf(0, 0));
    EXPECT_EQ(set.proprio[2 * i + 1], pf(0, 1));
  }
}

TEST_F(BuildFixture, SplitIsDeterministicAndDisjoint) {
  nn::NetworkConfig cfg;
  TrainingSet set;
  TrainingSetSink sink(set, cfg);
  BuildStats stats;
  build_rollout(*rollout_, params(), sink, stats);
  const auto [train, held] = set.split(0.1, 42);
  const auto [train2, held2] = set.split(0.1, 42);
  EXPECT_EQ(held.size(), set.size() / 10);
  EXPECT_EQ(train.size() + held.size(), set.size());
  EXPECT_EQ(held.reward, held2.reward);
  EXPECT_EQ(train.extero, train2.extero);
}

}  // namespace
}  // namespace vapor
