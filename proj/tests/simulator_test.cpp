#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "timeshift/evaluation.hpp"
#include "timeshift/simulator.hpp"

using namespace timeshift;
using namespace timeshift::sim;

namespace {

SimParams noiseless() {
  SimParams p;
  p.weber_fraction = 0.0;
  p.memory_correction_weight = 0.0;
  p.regression_weight = 0.0;
  p.report_flip_probability = 0.0;
  return p;
}

std::string csv_of(const std::vector<TrialRecord>& trials) {
  std::ostringstream out;
  write_trials(out, trials);
  return out.str();
}

}  // namespace

TEST(SimulateTrial, NoiselessLowBaselineIsTarget) {
  const SimParams p = noiseless();
  Rng rng(1);
  EXPECT_DOUBLE_EQ(simulate_trial(p, EngagementLevel::Low, std::nullopt, p.initial_reference_ticks(), rng), 30.0);
}

TEST(SimulateTrial, NarrowerGateLengthensProduction) {
  SimParams p = noiseless();
  p.gate_width_by_engagement = {0.8, 0.7, 0.6};
  Rng rng(1);
  const double ref = p.initial_reference_ticks();
  EXPECT_NEAR(simulate_trial(p, EngagementLevel::Low, std::nullopt, ref, rng), 30.0, 1e-12);
  EXPECT_NEAR(simulate_trial(p, EngagementLevel::High, std::nullopt, ref, rng), 40.0, 1e-12);
}

TEST(SimulateTrial, ArousalFromEngagementIncrease) {
  SimParams p = noiseless();
  p.arousal_gain = 0.5;
  p.gate_width_by_engagement = {1.0, 1.0, 1.0};
  Rng rng(1);
  const double ref = p.initial_reference_ticks();
  EXPECT_NEAR(simulate_trial(p, EngagementLevel::High, EngagementLevel::Low, ref, rng), 15.0, 1e-12);
  // A drop in engagement gives no boost.
  EXPECT_NEAR(simulate_trial(p, EngagementLevel::Low, EngagementLevel::High, ref, rng), 30.0, 1e-12);
}

TEST(SimulateTrial, NoiselessMatchesFormula) {
  SimParams p = noiseless();
  p.arousal_gain = 0.2;
  Rng rng(3);
  for (auto prev : kEngagementLevels)
    for (auto level : kEngagementLevels)
      for (double ref : {120.0, 300.0, 777.7}) {
        const double rate = p.base_clock_rate_hz * (1.0 + p.arousal_gain * std::max(0, code(level) - code(prev)));
        const double expected = ref / (rate * p.gate(level));
        EXPECT_NEAR(simulate_trial(p, level, prev, ref, rng), expected, 1e-12);
      }
}

TEST(SimulateTrial, MonotoneInGateAndClockRate) {
  SimParams p = noiseless();
  double last = INFINITY;
  for (double g = 0.1; g <= 1.0001; g += 0.05) {
    p.gate_width_by_engagement = {g, g, g};
    const double t = noiseless_production(p, EngagementLevel::Medium, std::nullopt, 300.0);
    EXPECT_LE(t, last);
    last = t;
  }
  p = noiseless();
  last = INFINITY;
  for (double r = 1.0; r <= 50.0; r += 1.0) {
    p.base_clock_rate_hz = r;
    const double t = noiseless_production(p, EngagementLevel::Medium, std::nullopt, 300.0);
    EXPECT_LE(t, last);
    last = t;
  }
}

TEST(SimulateTrial, NoisyOutputStaysAboveFloor) {
  SimParams p;
  p.weber_fraction = 2.0;
  Rng rng(5);
  for (int i = 0; i < 5000; ++i)
    EXPECT_GT(simulate_trial(p, EngagementLevel::High, EngagementLevel::Low, 300.0, rng), kMinProducedS);
}

TEST(ReferenceMemory, ZeroWeightsKeepReference) {
  const SimParams p = noiseless();
  EXPECT_DOUBLE_EQ(update_reference_memory(p, 321.0, 44.0, false, 33.8), 321.0);
}

TEST(ReferenceMemory, MatchesScalarOracle) {
  // Independent restatement of the update in target-equivalent seconds.
  const auto oracle = [](double wc, double wr, double s_old, double last, bool lower, double mean) {
    const double dev = std::min(std::abs(last - 30.0), 29.5);
    const double c = lower ? 30.0 + dev : 30.0 - dev;
    return (1.0 - wc - wr) * s_old + wc * c + wr * mean;
  };
  SimParams p;
  p.memory_correction_weight = 1.0;
  p.regression_weight = 0.0;
  const double per_s = p.ticks_per_second();
  EXPECT_NEAR(update_reference_memory(p, 30.0 * per_s, 40.0, false, 33.8) / per_s, 20.0, 1e-12);
  for (double wc : {0.0, 0.2, 0.5})
    for (double wr : {0.0, 0.3, 0.5})
      for (double last : {1.0, 12.0, 29.0, 45.0, 95.0})
        for (bool lower : {false, true}) {
          p.memory_correction_weight = wc;
          p.regression_weight = wr;
          const double got = update_reference_memory(p, 33.0 * per_s, last, lower, 33.8) / per_s;
          EXPECT_NEAR(got, oracle(wc, wr, 33.0, last, lower, 33.8), 1e-12);
          EXPECT_GT(got, 0.0);
        }
}

TEST(ReferenceMemory, FullRegressionGoesToPopulationMean) {
  SimParams p;
  p.memory_correction_weight = 0.0;
  p.regression_weight = 1.0;
  EXPECT_NEAR(update_reference_memory(p, 500.0, 40.0, true, 33.8) / p.ticks_per_second(), 33.8, 1e-12);
}

TEST(SimParams, ValidationRejectsBadValues) {
  const auto invalid = [](auto mutate) {
    SimParams p;
    mutate(p);
    try {
      p.validate();
    } catch (const Error& e) {
      return e.kind() == ErrorKind::InvalidParams;
    }
    return false;
  };
  EXPECT_TRUE(invalid([](SimParams& p) { p.gate_width_by_engagement = {0.7, 0.85, 1.0}; }));
  EXPECT_TRUE(invalid([](SimParams& p) { p.gate_width_by_engagement = {1.2, 0.85, 0.7}; }));
  EXPECT_TRUE(invalid([](SimParams& p) { p.memory_correction_weight = 0.7; p.regression_weight = 0.5; }));
  EXPECT_TRUE(invalid([](SimParams& p) { p.base_clock_rate_hz = 0.0; }));
  EXPECT_TRUE(invalid([](SimParams& p) { p.weber_fraction = -0.1; }));
  EXPECT_TRUE(invalid([](SimParams& p) { p.reference_ticks = -1.0; }));
  EXPECT_NO_THROW(SimParams{}.validate());
}

TEST(SimParams, JsonRoundTripAndUnknownKeys) {
  SimParams p;
  p.arousal_gain = 0.125;
  p.reference_ticks = 280.0;
  p.rng_seed = 99;
  const nlohmann::json j = p;
  const auto back = j.get<SimParams>();
  EXPECT_EQ(back.arousal_gain, 0.125);
  EXPECT_EQ(back.reference_ticks, 280.0);
  EXPECT_EQ(back.rng_seed, 99u);
  EXPECT_EQ(back.gate_width_by_engagement, p.gate_width_by_engagement);
  nlohmann::json bad = j;
  bad["gate_widht"] = 1;
  EXPECT_THROW(bad.get<SimParams>(), Error);
  const auto arr = nlohmann::json{{"gate_width_by_engagement", {1.0, 0.9, 0.8}}}.get<SimParams>();
  EXPECT_EQ(arr.gate(EngagementLevel::High), 0.8);
}

TEST(GenerateDataset, NoiselessSameEngagementGivesZeroDelta) {
  const auto d = generate_dataset(noiseless(), 1, 2, EngagementAssignment::fixed({EngagementLevel::Medium, EngagementLevel::Medium}));
  ASSERT_EQ(d.samples.size(), 1u);
  EXPECT_EQ(d.samples[0].delta_t_s, 0.0);
  EXPECT_EQ(d.samples[0].label, Direction::Increase);
}

TEST(GenerateDataset, RowCountsAndIds) {
  const auto trials = generate_trials(SimParams{}, 7, 6);
  ASSERT_EQ(trials.size(), 42u);
  EXPECT_EQ(trials.front().participant_id, "sim0001");
  EXPECT_EQ(trials.back().participant_id, "sim0007");
  EXPECT_EQ(trials.back().trial_index, 6);
  EXPECT_EQ(make_dataset(trials, Provenance::Synthetic).samples.size(), 35u);
}

TEST(GenerateDataset, DeterministicAndThreadIndependent) {
  SimParams p;
  p.rng_seed = 2024;
  const auto a = csv_of(generate_trials(p, 300, 3, EngagementAssignment::random_uniform(), 1));
  const auto b = csv_of(generate_trials(p, 300, 3, EngagementAssignment::random_uniform(), 1));
  const auto c = csv_of(generate_trials(p, 300, 3, EngagementAssignment::random_uniform(), 8));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  p.rng_seed = 2025;
  EXPECT_NE(a, csv_of(generate_trials(p, 300, 3)));
}

TEST(GenerateDataset, EngagementCoversAllNinePermutations) {
  const auto d = generate_dataset(SimParams{}, 2000, 2);
  std::array<std::array<int, 3>, 3> seen{};
  for (const auto& s : d.samples) ++seen[code(s.prev.engagement)][code(s.next.engagement)];
  for (const auto& row : seen)
    for (int n : row) EXPECT_GT(n, 150);  // expected ~222 each
}

TEST(GenerateDataset, ReportsFollowProduction) {
  SimParams p;
  p.report_flip_probability = 0.0;
  p.sensitivity_prevalence = 0.0;
  for (const auto& t : generate_trials(p, 200, 2)) {
    EXPECT_EQ(t.reported_lower_than_30, !(t.produced_time_s > 30.0));
    EXPECT_EQ(t.reported_high_engagement, t.engagement == EngagementLevel::High);
  }
}

TEST(GenerateDataset, DefaultCalibrationBand) {
  const auto d = generate_dataset(SimParams{}, 1000, 2);
  const double dec = static_cast<double>(d.count(Direction::Decrease)) / static_cast<double>(d.samples.size());
  EXPECT_GE(dec, 0.25);
  EXPECT_LE(dec, 0.50);
}

TEST(GenerateDataset, RejectsBadShapes) {
  EXPECT_THROW(generate_trials(SimParams{}, 0, 2), Error);
  EXPECT_THROW(generate_trials(SimParams{}, 5, 1), Error);
  EXPECT_THROW(generate_trials(SimParams{}, 5, 3, EngagementAssignment::fixed({EngagementLevel::Low})), Error);
}

TEST(Baselines, Examples) {
  using E = EngagementLevel;
  EXPECT_EQ(attention_baseline(E::Low, E::High), Direction::Increase);
  EXPECT_EQ(attention_baseline(E::High, E::Low), Direction::Decrease);
  EXPECT_EQ(attention_baseline(E::Medium, E::Medium), Direction::Increase);
  EXPECT_EQ(arousal_baseline(E::Low, E::High), Direction::Decrease);
  EXPECT_EQ(arousal_baseline(E::High, E::Low), Direction::Increase);
  EXPECT_EQ(arousal_baseline(E::Low, E::Low), Direction::Increase);
}

TEST(Baselines, MirrorOnStrictTransitionsAgreeOnTies) {
  for (auto a : kEngagementLevels)
    for (auto b : kEngagementLevels) {
      if (a == b)
        EXPECT_EQ(attention_baseline(a, b), arousal_baseline(a, b));
      else
        EXPECT_NE(attention_baseline(a, b), arousal_baseline(a, b));
    }
}

TEST(Baselines, NoiselessAttentionDominatedData) {
  SimParams p = noiseless();
  p.arousal_gain = 0.0;
  p.gate_width_by_engagement = {1.0, 0.8, 0.6};
  const auto strict = strict_transitions(generate_dataset(p, 600, 2));
  ASSERT_GT(strict.samples.size(), 300u);
  const auto rows = compare_baselines(strict, pinned_model());
  EXPECT_EQ(rows[1].name, "attention_baseline");
  EXPECT_DOUBLE_EQ(rows[1].metrics.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(rows[2].metrics.accuracy, 0.0);
}

TEST(Baselines, NoiselessArousalDominatedData) {
  SimParams p = noiseless();
  p.arousal_gain = 1.0;
  p.gate_width_by_engagement = {1.0, 1.0, 1.0};
  // A drop leaves the rate at base (ΔT = 0, labeled Increase); a rise speeds the clock.
  const auto strict = strict_transitions(generate_dataset(p, 600, 2));
  const auto rows = compare_baselines(strict, pinned_model());
  EXPECT_DOUBLE_EQ(rows[2].metrics.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(rows[1].metrics.accuracy, 0.0);
}
