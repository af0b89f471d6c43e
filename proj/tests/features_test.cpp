#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "timeshift/features.hpp"
#include "timeshift/random.hpp"

using namespace timeshift;

namespace {

SamplePair pair_of(EngagementLevel prev_level, double prev_time, bool lower, bool rep_high,
                   EngagementLevel next_level, double next_time = 30.0) {
  TrialRecord prev;
  prev.participant_id = "p";
  prev.trial_index = 1;
  prev.engagement = prev_level;
  prev.produced_time_s = prev_time;
  prev.reported_lower_than_30 = lower;
  prev.reported_high_engagement = rep_high;
  TrialRecord next = prev;
  next.trial_index = 2;
  next.engagement = next_level;
  next.produced_time_s = next_time;
  return make_pair(prev, next);
}

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::Io;
}

}  // namespace

TEST(RelError, Arithmetic) {
  EXPECT_DOUBLE_EQ(compute_rel_error(30.0), 0.0);
  EXPECT_DOUBLE_EQ(compute_rel_error(60.0), 100.0);
  EXPECT_DOUBLE_EQ(compute_rel_error(15.0), -50.0);
  EXPECT_NEAR(compute_rel_error(80.0), 166.6666666666667, 1e-9);
  EXPECT_DOUBLE_EQ(compute_rel_error(12.0), -60.0);
  EXPECT_DOUBLE_EQ(compute_rel_error(20.0, 10.0), 100.0);
}

TEST(RelError, NonPositiveTimesThrow) {
  EXPECT_EQ(kind_of([] { compute_rel_error(0.0); }), ErrorKind::NonPositiveTime);
  EXPECT_EQ(kind_of([] { compute_rel_error(-3.0); }), ErrorKind::NonPositiveTime);
  EXPECT_EQ(kind_of([] { compute_rel_error(3.0, 0.0); }), ErrorKind::NonPositiveTime);
}

TEST(Sensitivity, OnlyLowEngagementCanRevealIt) {
  TrialRecord r;
  r.reported_high_engagement = true;
  r.engagement = EngagementLevel::Low;
  EXPECT_EQ(derive_sensitivity(r), 1);
  r.engagement = EngagementLevel::High;
  EXPECT_EQ(derive_sensitivity(r), 0);
  r.engagement = EngagementLevel::Medium;
  EXPECT_EQ(derive_sensitivity(r), 0);
  r.engagement = EngagementLevel::Low;
  r.reported_high_engagement = false;
  EXPECT_EQ(derive_sensitivity(r), 0);
}

TEST(ChangeInEngagement, Codes) {
  EXPECT_EQ(change_in_engagement(EngagementLevel::High, EngagementLevel::Low), 0);
  EXPECT_EQ(change_in_engagement(EngagementLevel::Medium, EngagementLevel::Medium), 1);
  EXPECT_EQ(change_in_engagement(EngagementLevel::Low, EngagementLevel::Medium), 2);
}

TEST(BuildFeatures, Compositions) {
  const auto a = build_features(pair_of(EngagementLevel::Low, 45.0, false, true, EngagementLevel::High));
  EXPECT_EQ(a, (FeatureVector{50.0, 0, 1, 2, 2}));
  const auto b = build_features(pair_of(EngagementLevel::High, 30.0, true, false, EngagementLevel::Low));
  EXPECT_EQ(b, (FeatureVector{0.0, 1, 0, 0, 0}));
  const auto c = build_features(pair_of(EngagementLevel::Medium, 12.0, true, false, EngagementLevel::Medium));
  EXPECT_EQ(c, (FeatureVector{-60.0, 1, 0, 1, 1}));
}

TEST(BuildFeatures, NeverViolatesDependencyOverAllTransitions) {
  for (auto prev : kEngagementLevels)
    for (auto next : kEngagementLevels)
      for (bool rep : {false, true}) {
        const auto f = build_features(pair_of(prev, 31.0, false, rep, next));
        EXPECT_TRUE(satisfies_dependency(f));
        EXPECT_NO_THROW(validate(f));
        if (f.high_visual_sensitivity == 1) {
          EXPECT_EQ(prev, EngagementLevel::Low);
        }
      }
}

TEST(Validate, RejectsDependencyViolationsWithNamedConstraint) {
  try {
    validate(FeatureVector{10.0, 0, 0, 2, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DependencyViolation);
    EXPECT_NE(std::string(e.what()).find("V2/Change constraint"), std::string::npos);
  }
  EXPECT_EQ(kind_of([] { validate(FeatureVector{10.0, 0, 0, 0, 2}); }), ErrorKind::DependencyViolation);
  EXPECT_EQ(kind_of([] { validate(FeatureVector{-101.0, 0, 0, 1, 1}); }), ErrorKind::InvalidParams);
  EXPECT_EQ(kind_of([] { validate(FeatureVector{0.0, 2, 0, 1, 1}); }), ErrorKind::InvalidParams);
}

TEST(Scaler, TwoPointPopulationStd) {
  const std::vector<Row<1>> rows = {{0.0}, {100.0}};
  const auto s = fit_scaler<1>(std::span<const Row<1>>(rows));
  EXPECT_DOUBLE_EQ(s.means[0], 50.0);
  EXPECT_DOUBLE_EQ(s.std_devs[0], 50.0);
}

TEST(Scaler, ConstantColumnAndTooFewSamples) {
  std::vector<FeatureVector> fs = {{15.0, 0, 0, 1, 1}, {15.0, 1, 1, 2, 2}, {15.0, 0, 0, 0, 0}};
  try {
    fit_scaler(fs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ConstantColumn);
    EXPECT_EQ(e.index(), 0u);
  }
  const std::vector<FeatureVector> one = {{15.0, 0, 0, 1, 1}};
  EXPECT_EQ(kind_of([&] { fit_scaler(one); }), ErrorKind::TooFewSamples);
}

TEST(Scaler, UnitScalePolicyKeepsConstantColumnsAtZero) {
  const std::vector<Row<2>> rows = {{1.0, 4.0}, {3.0, 4.0}};
  const auto s = fit_scaler<2>(std::span<const Row<2>>(rows), ConstantColumnPolicy::UnitScale);
  EXPECT_DOUBLE_EQ(s.std_devs[1], 1.0);
  EXPECT_DOUBLE_EQ(transform<2>(rows[0], s)[1], 0.0);
}

TEST(Transform, ReferenceRelErrorStats) {
  ScalerStats stats{{15.0, 0.5, 0.5, 1.0, 1.0}, {44.0, 0.5, 0.5, 1.0, 1.0}};
  EXPECT_DOUBLE_EQ(transform(FeatureVector{59.0, 0, 0, 1, 1}, stats)[0], 1.0);
  const auto z = transform<kFeatureCount>(stats.means, stats);
  for (double v : z) EXPECT_EQ(v, 0.0);
}

TEST(Transform, InverseRecoversInput) {
  Rng rng(7);
  ScalerStats stats{{15.0, 0.4, 0.06, 1.0, 1.0}, {44.0, 0.49, 0.24, 0.8, 0.8}};
  for (int i = 0; i < 1000; ++i) {
    FeatureArray x{};
    for (double& v : x) v = 200.0 * rng.uniform() - 100.0;
    const auto back = inverse_transform<kFeatureCount>(transform<kFeatureCount>(x, stats), stats);
    for (std::size_t j = 0; j < kFeatureCount; ++j) EXPECT_NEAR(back[j], x[j], 1e-12);
  }
}

TEST(Transform, TrainingColumnsAreStandardized) {
  Rng rng(11);
  std::vector<FeatureArray> rows;
  for (int i = 0; i < 500; ++i)
    rows.push_back({120.0 * rng.normal(), static_cast<double>(rng.below(2)), static_cast<double>(rng.below(2)),
                    static_cast<double>(rng.below(3)), static_cast<double>(rng.below(3))});
  const auto stats = fit_scaler<kFeatureCount>(std::span<const FeatureArray>(rows));
  const auto Z = transform_all<kFeatureCount>(std::span<const FeatureArray>(rows), stats);
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    double mean = 0.0, ss = 0.0;
    for (const auto& z : Z) mean += z[j];
    mean /= static_cast<double>(Z.size());
    for (const auto& z : Z) ss += (z[j] - mean) * (z[j] - mean);
    EXPECT_NEAR(mean, 0.0, 1e-9);
    EXPECT_NEAR(std::sqrt(ss / static_cast<double>(Z.size())), 1.0, 1e-9);
  }
}

TEST(Relabel, WorstSceneIsHighBaselineIsLow) {
  const auto labels = label_engagement_from_performance({{"daylight", 0.1}, {"fog", 0.4}, {"stop_go", 0.9}}, "daylight");
  EXPECT_EQ(labels.at("daylight"), EngagementLevel::Low);
  EXPECT_EQ(labels.at("fog"), EngagementLevel::Medium);
  EXPECT_EQ(labels.at("stop_go"), EngagementLevel::High);
  const auto two = label_engagement_from_performance({{"daylight", 0.1}, {"x", 0.5}}, "daylight");
  EXPECT_EQ(two.at("daylight"), EngagementLevel::Low);
  EXPECT_EQ(two.at("x"), EngagementLevel::High);
}

TEST(Relabel, TiesGoToLexicographicallyFirstScene) {
  const auto labels = label_engagement_from_performance({{"base", 0.0}, {"b", 0.7}, {"a", 0.7}}, "base");
  EXPECT_EQ(labels.at("a"), EngagementLevel::High);
  EXPECT_EQ(labels.at("b"), EngagementLevel::Medium);
}

TEST(Relabel, MissingBaselineAndTooFewScenes) {
  EXPECT_EQ(kind_of([] { label_engagement_from_performance({{"a", 0.1}, {"b", 0.2}}, "daylight"); }),
            ErrorKind::MissingBaseline);
  EXPECT_EQ(kind_of([] { label_engagement_from_performance({{"daylight", 0.1}}, "daylight"); }),
            ErrorKind::TooFewSamples);
}

TEST(FeatureCsv, WriteThenParseRoundTrips) {
  Dataset d;
  d.samples.push_back(pair_of(EngagementLevel::Low, 45.0, false, true, EngagementLevel::High, 40.0));
  d.samples.push_back(pair_of(EngagementLevel::High, 30.0, true, false, EngagementLevel::Low, 31.0));
  const auto table = build_feature_table(d);
  std::ostringstream out;
  write_feature_csv(out, table);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            "t1_rel_error,t1_lower_than_30,high_visual_sensitivity,v2_engagement_level,"
            "change_in_engagement_level,label");
  EXPECT_NE(out.str().find("50.0,0,1,2,2,1"), std::string::npos);
  std::istringstream in(out.str());
  const auto back = parse_feature_csv(in);
  EXPECT_EQ(back.features, table.features);
  EXPECT_EQ(back.labels, table.labels);
}

TEST(FeatureCsv, RejectsDependencyViolationsAndNonIntegerCodes) {
  const std::string header =
      "t1_rel_error,t1_lower_than_30,high_visual_sensitivity,v2_engagement_level,change_in_engagement_level,label\n";
  std::istringstream bad_dep(header + "10,0,0,2,0,1\n");
  try {
    parse_feature_csv(bad_dep);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::DependencyViolation);
    EXPECT_NE(std::string(e.what()).find("V2/Change constraint"), std::string::npos);
  }
  std::istringstream bad_code(header + "10,0.5,0,1,1,0\n");
  EXPECT_EQ(kind_of([&] { parse_feature_csv(bad_code); }), ErrorKind::MalformedRow);
  std::istringstream bad_label(header + "10,0,0,1,1,maybe\n");
  EXPECT_EQ(kind_of([&] { parse_feature_csv(bad_label); }), ErrorKind::MalformedRow);
  // Standardized matrices are raw z-scores and skip domain checks.
  std::istringstream z(header + "0.5,-1.2,3.96,0.1,-0.3,decrease\n");
  const auto m = parse_feature_matrix(z);
  ASSERT_EQ(m.rows.size(), 1u);
  EXPECT_DOUBLE_EQ(m.rows[0][2], 3.96);
  EXPECT_EQ(m.labels[0], 1);
}
