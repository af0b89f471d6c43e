#include <gtest/gtest.h>

#include "timeshift/config.hpp"

using namespace timeshift;
using nlohmann::json;

TEST(Config, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.target_interval_s, 30.0);
  EXPECT_EQ(c.C, 12.06);
  EXPECT_EQ(c.thresholds.prob_low, 0.4);
  EXPECT_EQ(c.thresholds.prob_high, 0.6);
  EXPECT_EQ(c.thresholds.delta_small, 5.0);
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, ParsesAllSections) {
  const auto c = config_from_json(json::parse(R"({
    "seed": 7, "C": 2.5, "thresholds": {"prob_low": 0.3, "prob_high": 0.7, "delta_small": 4},
    "paths": {"input": "in.csv", "output": "out.json", "model": "pinned"},
    "sim": {"weber_fraction": 0.0, "gate_width_by_engagement": {"low": 1.0, "medium": 0.9, "high": 0.8}},
    "n_participants": 10, "n_trials": 3, "engagement_sequence": ["low", 1, "HIGH"],
    "balance": false, "c_grid": [1, 10], "background": "data", "threads": 4
  })"));
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.C, 2.5);
  EXPECT_EQ(c.thresholds.prob_low, 0.3);
  EXPECT_EQ(c.paths.model, "pinned");
  ASSERT_TRUE(c.sim.has_value());
  EXPECT_EQ(c.sim->weber_fraction, 0.0);
  EXPECT_EQ(c.sim->gate(EngagementLevel::High), 0.8);
  EXPECT_EQ(c.engagement_sequence,
            (std::vector<EngagementLevel>{EngagementLevel::Low, EngagementLevel::Medium, EngagementLevel::High}));
  EXPECT_FALSE(c.balance);
  EXPECT_EQ(c.c_grid, (std::vector<double>{1, 10}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(json::parse(R"({"sede": 1})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"sim": {"webr": 1}})")), Error);
  EXPECT_THROW(config_from_json(json::parse(R"({"C": "big"})")), Error);
  EXPECT_THROW(config_from_json(json::parse("[1,2]")), Error);
  auto c = config_from_json(json::parse(R"({"thresholds": {"prob_low": 0.55}})"));
  EXPECT_THROW(c.validate(), Error);
  c = config_from_json(json::parse(R"({"n_trials": 3, "engagement_sequence": ["low"]})"));
  EXPECT_THROW(c.validate(), Error);
  c = config_from_json(json::parse(R"({"sim": {"regression_weight": 0.9}})"));
  try {
    c.validate();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
  }
}

TEST(Config, SeedDrivesSimulator) {
  RunConfig c;
  c.seed = 1234;
  c.sim = sim::SimParams{};
  c.sim->rng_seed = 1;
  EXPECT_EQ(c.effective_sim().rng_seed, 1234u);
}

TEST(Config, HashCoversResultsButNotPathsOrThreads) {
  RunConfig a;
  RunConfig b = a;
  b.paths.output = "elsewhere.json";
  b.threads = 16;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = a.seed + 1;
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.thresholds.delta_small = 6.0;
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
}
