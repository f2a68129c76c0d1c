#include <gtest/gtest.h>

#include "vapor/config.hpp"

using namespace vapor;

TEST(Config, DefaultsRoundTrip) {
  Config d;
  d.resolve();
  const Config back = config_from_json(to_json(d));
  EXPECT_EQ(to_json(back), to_json(d));
  EXPECT_EQ(config_hash(back), config_hash(d));
  EXPECT_EQ(config_from_json(Json::object()).training.steps, 20000);
}

TEST(Config, UnknownKeyNamesThePath) {
  try {
    config_from_json(Json::parse(R"({"training": {"cql": {"alpha_cq": 2.0}}})"));
    FAIL() << "accepted an unknown key";
  } catch (const UnknownConfigKey& e) {
    EXPECT_EQ(e.key(), "training.cql.alpha_cq");
    EXPECT_NE(std::string(e.what()).find("training.cql.alpha_cq"), std::string::npos);
  }
  EXPECT_THROW(config_from_json(Json::parse(R"({"bogus": 1})")), UnknownConfigKey);
  EXPECT_THROW(config_from_json(Json::parse(R"({"network": {"grid_n": 20}})")), UnknownConfigKey);
}

TEST(Config, TypeAndRangeErrors) {
  EXPECT_THROW(config_from_json(Json::parse(R"({"training": {"steps": "many"}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"training": {"steps": 1.5}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"planner": {"context": {"phi": 1.5}}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"planner": {"lattice": 4}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"eval": {"archetypes": ["swamp"]}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"eval": {"methods": ["teleport"]}})")), ConfigError);
  EXPECT_THROW(config_from_json(Json::parse(R"({"world": 3})")), ConfigError);
}

TEST(Config, OverridesApplyAndPropagate) {
  const Config c = config_from_json(Json::parse(
      R"({"seed": 9, "percept": {"grid": {"n": 20}}, "training": {"cql": {"alpha_cql": 0.0}}, "world": {"dynamics": {"robot_radius": 0.25}}})"));
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.network.grid_n, 20);
  EXPECT_EQ(c.training.cql.alpha_cql, 0.0);
  EXPECT_EQ(c.world.proprio.robot_radius, 0.25);
  EXPECT_EQ(c.episode().dynamics.robot_radius, 0.25);
  EXPECT_EQ(c.sensing().percept.grid.n, 20);
}

TEST(Config, HashChangesWithAnyParameter) {
  const std::string base = config_hash(config_from_json(Json::object()));
  EXPECT_EQ(base.size(), 16u);
  const char* patches[] = {R"({"seed": 1})",
                           R"({"training": {"cql": {"lr_actor": 0.0003001}}})",
                           R"({"planner": {"context": {"hysteresis": 4}}})",
                           R"({"network": {"attention": false}})",
                           R"({"rewards": {"reward": {"eta": [1.0, 0.5, 0.3]}}})",
                           R"({"eval": {"trials": 21}})"};
  for (const char* p : patches) EXPECT_NE(config_hash(config_from_json(Json::parse(p))), base) << p;
  EXPECT_EQ(config_hash(config_from_json(Json::parse(R"({"eval": {"trials": 20}})"))), base);
}
