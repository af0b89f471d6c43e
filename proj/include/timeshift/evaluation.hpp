#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "timeshift/data_model.hpp"
#include "timeshift/error.hpp"
#include "timeshift/features.hpp"
#include "timeshift/logistic.hpp"
#include "timeshift/parallel.hpp"
#include "timeshift/random.hpp"
#include "timeshift/simulator.hpp"
#include "timeshift/text.hpp"

namespace timeshift {

// Boundary values (p = 0.4/0.5/0.6, ΔT = ±delta_small) belong to the less
// extreme class.
struct Thresholds {
  double prob_low = 0.4;
  double prob_high = 0.6;
  double delta_small = 5.0;

  void validate() const {
    if (!(0.0 < prob_low && prob_low < 0.5 && 0.5 < prob_high && prob_high < 1.0))
      throw Error(ErrorKind::InvalidConfig, "thresholds must satisfy 0 < prob_low < 0.5 < prob_high < 1");
    if (!(delta_small > 0.0)) throw Error(ErrorKind::InvalidConfig, "delta_small must be > 0");
  }
};

constexpr Direction classify_direction(double p) noexcept {
  return p > 0.5 ? Direction::Decrease : Direction::Increase;
}

constexpr MagnitudeLevel classify_actual_magnitude(double delta_t_s,
                                                   const Thresholds& t = {}) noexcept {
  if (delta_t_s > t.delta_small) return MagnitudeLevel::HighIncrease;
  if (delta_t_s < -t.delta_small) return MagnitudeLevel::HighDecrease;
  return MagnitudeLevel::SmallChange;
}

constexpr MagnitudeLevel classify_predicted_magnitude(double p, const Thresholds& t = {}) noexcept {
  if (p > t.prob_high) return MagnitudeLevel::HighDecrease;
  if (p < t.prob_low) return MagnitudeLevel::HighIncrease;
  return MagnitudeLevel::SmallChange;
}

struct PredictionOutcome {
  double probability_of_decrease = 0.5;
  Direction direction = Direction::Increase;
  MagnitudeLevel predicted_magnitude = MagnitudeLevel::SmallChange;

  friend bool operator==(const PredictionOutcome&, const PredictionOutcome&) = default;
};

inline PredictionOutcome make_outcome(double p, const Thresholds& t = {}) {
  return {p, classify_direction(p), classify_predicted_magnitude(p, t)};
}

// ---------------------------------------------------------------------------
// Class balancing

/// Indices kept after undersampling the majority class uniformly without
/// replacement to the minority count, returned in ascending order.
inline std::vector<std::size_t> undersample_indices(std::span<const int> labels,
                                                    std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == 1 ? 1 : 0].push_back(i);
  if (by_class[0].empty() || by_class[1].empty())
    throw Error(ErrorKind::SingleClass, "undersampling needs both classes");
  const std::size_t minority = std::min(by_class[0].size(), by_class[1].size());
  auto& majority = by_class[0].size() > minority ? by_class[0] : by_class[1];
  if (majority.size() > minority) {
    Rng rng(seed);
    rng.shuffle(std::span<std::size_t>(majority));
    majority.resize(minority);
  }
  std::vector<std::size_t> kept = by_class[0];
  kept.insert(kept.end(), by_class[1].begin(), by_class[1].end());
  std::sort(kept.begin(), kept.end());
  return kept;
}

inline Dataset undersample(const Dataset& dataset, std::uint64_t seed) {
  std::vector<int> labels;
  labels.reserve(dataset.samples.size());
  for (const auto& s : dataset.samples) labels.push_back(label_code(s.label));
  Dataset out{{}, dataset.provenance, dataset.seed};
  for (std::size_t i : undersample_indices(labels, seed)) out.samples.push_back(dataset.samples[i]);
  return out;
}

inline FeatureTable undersample(const FeatureTable& table, std::uint64_t seed) {
  const auto kept = undersample_indices(table.labels, seed);
  return table.subset(kept);
}

// ---------------------------------------------------------------------------
// Metrics, positive class = Decrease

// counts[actual][predicted], index 0 = Increase, 1 = Decrease.
struct BinaryConfusion {
  std::array<std::array<std::size_t, 2>, 2> counts{};

  std::size_t tp() const noexcept { return counts[1][1]; }
  std::size_t fp() const noexcept { return counts[0][1]; }
  std::size_t fn() const noexcept { return counts[1][0]; }
  std::size_t tn() const noexcept { return counts[0][0]; }
  std::size_t total() const noexcept { return tp() + fp() + fn() + tn(); }
};

struct Metrics {
  double precision = 0.0;
  double recall = 0.0;
  double accuracy = 0.0;
  double f1 = 0.0;
  // False when there were no predicted (resp. actual) positives; the value is 0.
  bool precision_defined = true;
  bool recall_defined = true;
  BinaryConfusion confusion;
  std::size_t n = 0;
};

inline Metrics metrics_from_confusion(const BinaryConfusion& c) {
  Metrics m;
  m.confusion = c;
  m.n = c.total();
  const auto ratio = [](std::size_t num, std::size_t den, bool& defined) {
    defined = den > 0;
    return defined ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  m.precision = ratio(c.tp(), c.tp() + c.fp(), m.precision_defined);
  m.recall = ratio(c.tp(), c.tp() + c.fn(), m.recall_defined);
  m.accuracy = m.n ? static_cast<double>(c.tp() + c.tn()) / static_cast<double>(m.n) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

inline Metrics metrics(std::span<const Direction> predicted, std::span<const Direction> actual) {
  if (predicted.size() != actual.size())
    throw Error(ErrorKind::LengthMismatch, "predictions and actuals differ in length");
  if (predicted.empty()) throw Error(ErrorKind::TooFewSamples, "no predictions");
  BinaryConfusion c;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    ++c.counts[label_code(actual[i])][label_code(predicted[i])];
  return metrics_from_confusion(c);
}

// ---------------------------------------------------------------------------
// Magnitude confusion

// counts[actual][predicted] over MagnitudeLevel codes.
struct MagnitudeConfusion {
  std::array<std::array<std::size_t, 3>, 3> counts{};

  std::size_t total() const noexcept {
    std::size_t n = 0;
    for (const auto& row : counts)
      for (auto v : row) n += v;
    return n;
  }
  std::size_t row_sum(MagnitudeLevel actual) const noexcept {
    const auto& row = counts[code(actual)];
    return row[0] + row[1] + row[2];
  }
  std::size_t column_sum(MagnitudeLevel predicted) const noexcept {
    const int c = code(predicted);
    return counts[0][c] + counts[1][c] + counts[2][c];
  }
  static constexpr int code(MagnitudeLevel m) noexcept { return static_cast<int>(m); }
};

struct HighlightedCell {
  MagnitudeLevel actual;
  MagnitudeLevel predicted;
  std::size_t count = 0;
  // Share of all samples with this predicted level (0 when that level is empty).
  double percent_of_predicted = 0.0;
  bool correct = false;
};

struct MagnitudeSummary {
  MagnitudeConfusion confusion;
  // Three diagonal cells, then the two extreme-wrong corners.
  std::array<HighlightedCell, 5> highlighted{};
};

inline MagnitudeSummary magnitude_confusion(std::span<const PredictionOutcome> outcomes,
                                            std::span<const double> deltas,
                                            const Thresholds& t = {}) {
  if (outcomes.size() != deltas.size())
    throw Error(ErrorKind::LengthMismatch, "outcomes and deltas differ in length");
  MagnitudeSummary s;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto actual = classify_actual_magnitude(deltas[i], t);
    ++s.confusion.counts[MagnitudeConfusion::code(actual)]
                        [MagnitudeConfusion::code(outcomes[i].predicted_magnitude)];
  }
  using M = MagnitudeLevel;
  const std::array<std::pair<M, M>, 5> cells = {{{M::HighIncrease, M::HighIncrease},
                                                 {M::SmallChange, M::SmallChange},
                                                 {M::HighDecrease, M::HighDecrease},
                                                 {M::HighDecrease, M::HighIncrease},
                                                 {M::HighIncrease, M::HighDecrease}}};
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const auto [actual, predicted] = cells[k];
    HighlightedCell& cell = s.highlighted[k];
    cell.actual = actual;
    cell.predicted = predicted;
    cell.count = s.confusion.counts[MagnitudeConfusion::code(actual)][MagnitudeConfusion::code(predicted)];
    const auto column = s.confusion.column_sum(predicted);
    cell.percent_of_predicted =
        column ? 100.0 * static_cast<double>(cell.count) / static_cast<double>(column) : 0.0;
    cell.correct = actual == predicted;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CvOptions {
  double C = kDefaultInverseRegularization;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  Thresholds thresholds{};
  double tol = 1e-8;
  int max_iter = 5000;
};

struct LoocvResult {
  std::vector<PredictionOutcome> outcomes;  // ordered by sample index
  Metrics metrics;
  double C = kDefaultInverseRegularization;
  std::uint64_t seed = 0;
  std::size_t non_converged_folds = 0;
};

namespace detail {

inline std::vector<std::size_t> all_but(std::size_t n, std::size_t held_out) {
  std::vector<std::size_t> idx;
  idx.reserve(n - 1);
  for (std::size_t i = 0; i < n; ++i)
    if (i != held_out) idx.push_back(i);
  return idx;
}

struct FoldModel {
  LogisticModel model;
  bool converged = true;
};

// Scaler and model are fit on exactly the training indices.
inline FoldModel fit_on(const FeatureTable& table, std::span<const std::size_t> train,
                        const CvOptions& options) {
  std::vector<FeatureArray> raw;
  std::vector<int> y;
  raw.reserve(train.size());
  for (std::size_t i : train) {
    raw.push_back(table.features[i].to_array());
    y.push_back(table.labels[i]);
  }
  // A fold can lose every non-zero value of a rare binary feature.
  const auto scaler = fit_scaler<kFeatureCount>(std::span<const FeatureArray>(raw),
                                                ConstantColumnPolicy::UnitScale);
  const auto Z = transform_all<kFeatureCount>(std::span<const FeatureArray>(raw), scaler);
  FitOptions fo;
  fo.C = options.C;
  fo.tol = options.tol;
  fo.max_iter = options.max_iter;
  auto fitted = fit<kFeatureCount>(std::span<const FeatureArray>(Z), y, fo);
  fitted.model.scaler = scaler;
  fitted.model.seed = options.seed;
  return {fitted.model, fitted.converged()};
}

inline bool has_both_classes(const FeatureTable& table, std::span<const std::size_t> idx) {
  bool pos = false, neg = false;
  for (std::size_t i : idx) (table.labels[i] == 1 ? pos : neg) = true;
  return pos && neg;
}

}  // namespace detail

/// Fingerprint of the rows (features and labels) that fold `held_out` trains on.
inline std::uint64_t fold_training_hash(const FeatureTable& table, std::size_t held_out) {
  std::uint64_t h = text::fnv1a64("");
  for (std::size_t i : detail::all_but(table.size(), held_out)) {
    for (double v : table.features[i].to_array()) h = text::fnv1a64(text::format_real(v) + ",", h);
    h = text::fnv1a64(std::to_string(table.labels[i]) + ";", h);
  }
  return h;
}

/// Leave-one-out: for each sample, fit scaler and model on the other n − 1,
/// then predict the held-out sample. Folds run in parallel; results are
/// stored by sample index.
inline LoocvResult loocv(const FeatureTable& table, const CvOptions& options = {}) {
  const std::size_t n = table.size();
  if (n < 10) throw Error(ErrorKind::TooFewSamples, "LOOCV needs at least 10 samples");
  for (std::size_t i = 0; i < n; ++i) {
    const auto train = detail::all_but(n, i);
    if (!detail::has_both_classes(table, train))
      throw Error(ErrorKind::FoldSingleClass,
                  "fold " + std::to_string(i) + " has a single class", i);
  }
  LoocvResult result;
  result.C = options.C;
  result.seed = options.seed;
  result.outcomes.resize(n);
  std::vector<char> converged(n, 1);
  parallel_for(n, options.threads, [&](std::size_t i) {
    const auto train = detail::all_but(n, i);
    const auto fold = detail::fit_on(table, train, options);
    converged[i] = fold.converged ? 1 : 0;
    result.outcomes[i] =
        make_outcome(predict_proba_raw(fold.model, table.features[i]), options.thresholds);
  });
  result.non_converged_folds =
      static_cast<std::size_t>(std::count(converged.begin(), converged.end(), 0));
  std::vector<Direction> predicted, actual;
  for (std::size_t i = 0; i < n; ++i) {
    predicted.push_back(result.outcomes[i].direction);
    actual.push_back(label_direction(table.labels[i]));
  }
  result.metrics = metrics(predicted, actual);
  return result;
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
inline std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t k,
                                                 std::uint64_t seed) {
  std::vector<std::size_t> fold(labels.size(), 0);
  Rng rng(seed);
  std::size_t offset = 0;
  for (int cls : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == cls) idx.push_back(i);
    rng.shuffle(std::span<std::size_t>(idx));
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = (offset + r) % k;
    offset += idx.size();
  }
  return fold;
}

struct KFoldOptions {
  std::size_t k = 5;
  std::size_t repeats = 3;
  std::vector<double> grid = {kDefaultInverseRegularization};
  std::uint64_t seed = 0;
  bool undersample_each_repeat = true;
  double tol = 1e-8;
  int max_iter = 5000;
};

struct KFoldResult {
  double best_C = kDefaultInverseRegularization;
  std::vector<double> grid;
  std::vector<double> mean_f1;  // aligned with grid
};

/// Grid search over C by repeated stratified k-fold with F1 on Decrease.
/// Each repeat re-undersamples the data with its own seed. Ties on mean F1
/// resolve to the smaller C.
inline KFoldResult kfold_cv(const FeatureTable& table, const KFoldOptions& options) {
  if (options.grid.empty()) throw Error(ErrorKind::InvalidParams, "empty C grid");
  if (options.k < 2) throw Error(ErrorKind::InvalidParams, "k must be >= 2");
  if (options.k > table.size())
    throw Error(ErrorKind::TooFewSamples, "k = " + std::to_string(options.k) + " exceeds n = " +
                                              std::to_string(table.size()));
  if (options.repeats < 1) throw Error(ErrorKind::InvalidParams, "repeats must be >= 1");

  KFoldResult result;
  result.grid = options.grid;
  result.mean_f1.assign(options.grid.size(), 0.0);
  std::size_t evaluations = 0;
  for (std::size_t rep = 0; rep < options.repeats; ++rep) {
    const std::uint64_t rep_seed = derive_seed(options.seed, rep);
    const FeatureTable data =
        options.undersample_each_repeat ? undersample(table, rep_seed) : table;
    if (options.k > data.size())
      throw Error(ErrorKind::TooFewSamples, "k exceeds the balanced sample count");
    const auto fold = stratified_folds(data.labels, options.k, derive_seed(rep_seed, 1));
    for (std::size_t f = 0; f < options.k; ++f) {
      std::vector<std::size_t> train, test;
      for (std::size_t i = 0; i < data.size(); ++i) (fold[i] == f ? test : train).push_back(i);
      if (!detail::has_both_classes(data, train))
        throw Error(ErrorKind::FoldSingleClass, "fold " + std::to_string(f) + " has a single class", f);
      for (std::size_t g = 0; g < options.grid.size(); ++g) {
        CvOptions cv;
        cv.C = options.grid[g];
        cv.tol = options.tol;
        cv.max_iter = options.max_iter;
        const auto fm = detail::fit_on(data, train, cv);
        std::vector<Direction> predicted, actual;
        for (std::size_t i : test) {
          predicted.push_back(classify_direction(predict_proba_raw(fm.model, data.features[i])));
          actual.push_back(label_direction(data.labels[i]));
        }
        result.mean_f1[g] += metrics(predicted, actual).f1;
      }
      ++evaluations;
    }
  }
  for (double& v : result.mean_f1) v /= static_cast<double>(evaluations);

  std::size_t best = 0;
  for (std::size_t g = 1; g < options.grid.size(); ++g) {
    const bool better = result.mean_f1[g] > result.mean_f1[best];
    const bool tie_smaller =
        result.mean_f1[g] == result.mean_f1[best] && options.grid[g] < options.grid[best];
    if (better || tie_smaller) best = g;
  }
  result.best_C = options.grid[best];
  return result;
}

// ---------------------------------------------------------------------------
// Predictor comparison

struct PredictorRow {
  std::string name;
  Metrics metrics;
};

inline Dataset strict_transitions(const Dataset& dataset) {
  Dataset out{{}, dataset.provenance, dataset.seed};
  for (const auto& s : dataset.samples)
    if (s.prev.engagement != s.next.engagement) out.samples.push_back(s);
  return out;
}

/// Model, attention baseline and arousal baseline on the same samples, in
/// that row order.
inline std::vector<PredictorRow> compare_baselines(const Dataset& dataset, const LogisticModel& model,
                                                   double target_s = kTargetIntervalS) {
  std::vector<Direction> actual, by_model, by_attention, by_arousal;
  for (const auto& s : dataset.samples) {
    actual.push_back(s.label);
    by_model.push_back(classify_direction(predict_proba_raw(model, build_features(s, target_s))));
    by_attention.push_back(attention_baseline(s.prev.engagement, s.next.engagement));
    by_arousal.push_back(arousal_baseline(s.prev.engagement, s.next.engagement));
  }
  return {{"logistic_regression", metrics(by_model, actual)},
          {"attention_baseline", metrics(by_attention, actual)},
          {"arousal_baseline", metrics(by_arousal, actual)}};
}

// Both rules depend only on the direction of the engagement change, which the
// change code carries (0 = lower, 1 = same, 2 = higher).
inline Direction attention_baseline(const FeatureVector& f) noexcept {
  return f.change_in_engagement_level == 0 ? Direction::Decrease : Direction::Increase;
}

inline Direction arousal_baseline(const FeatureVector& f) noexcept {
  return f.change_in_engagement_level == 2 ? Direction::Decrease : Direction::Increase;
}

/// Same row layout as compare_baselines, with the model's predictions given
/// (e.g. out-of-fold LOOCV directions).
inline std::vector<PredictorRow> compare_predictors(const FeatureTable& table,
                                                    std::span<const Direction> model_predictions) {
  if (model_predictions.size() != table.size())
    throw Error(ErrorKind::LengthMismatch, "predictions and table differ in length");
  std::vector<Direction> actual, by_attention, by_arousal;
  for (std::size_t i = 0; i < table.size(); ++i) {
    actual.push_back(label_direction(table.labels[i]));
    by_attention.push_back(attention_baseline(table.features[i]));
    by_arousal.push_back(arousal_baseline(table.features[i]));
  }
  return {{"logistic_regression", metrics(model_predictions, actual)},
          {"attention_baseline", metrics(by_attention, actual)},
          {"arousal_baseline", metrics(by_arousal, actual)}};
}

// ---------------------------------------------------------------------------
// Reports

inline nlohmann::json confusion_json(const BinaryConfusion& c) { return c.counts; }

inline nlohmann::json magnitude_json(const MagnitudeSummary& s) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : s.highlighted)
    cells.push_back({{"actual", to_string(c.actual)},
                     {"predicted", to_string(c.predicted)},
                     {"count", c.count},
                     {"percent_of_predicted", c.percent_of_predicted},
                     {"correct", c.correct}});
  return {{"levels", {"high_increase", "small_change", "high_decrease"}},
          {"counts", s.confusion.counts},
          {"highlighted", cells}};
}

/// {model_name, n, precision, recall, accuracy, confusion[2][2],
///  magnitude_confusion[3][3], seed, C}; confusion rows are actual classes
/// (increase, decrease), columns predicted.
inline nlohmann::json evaluation_report(const std::string& model_name, const Metrics& m,
                                        const MagnitudeConfusion* magnitude, std::uint64_t seed,
                                        double C) {
  nlohmann::json j;
  j["model_name"] = model_name;
  j["n"] = m.n;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["accuracy"] = m.accuracy;
  j["precision_defined"] = m.precision_defined;
  j["confusion"] = confusion_json(m.confusion);
  j["magnitude_confusion"] = magnitude ? nlohmann::json(magnitude->counts) : nlohmann::json(nullptr);
  j["seed"] = seed;
  j["C"] = C;
  return j;
}

inline void write_predictor_table(std::ostream& out, std::span<const PredictorRow> rows) {
  out << "model,precision,recall,accuracy\n";
  for (const auto& r : rows)
    out << r.name << ',' << text::format_real(r.metrics.precision) << ','
        << text::format_real(r.metrics.recall) << ',' << text::format_real(r.metrics.accuracy) << '\n';
}

// Per-sample scatter data: id,probability,direction_pred,direction_actual,
// delta_t,magnitude_pred,magnitude_actual
inline void write_outcomes_csv(std::ostream& out, const FeatureTable& table,
                               std::span<const PredictionOutcome> outcomes,
                               const Thresholds& t = {}) {
  out << "id,probability,direction_pred,direction_actual,delta_t,magnitude_pred,magnitude_actual\n";
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const double dt = table.deltas[i];
    out << text::csv_field(table.ids[i]) << ',' << text::format_real(outcomes[i].probability_of_decrease)
        << ',' << to_string(outcomes[i].direction) << ','
        << to_string(label_direction(table.labels[i])) << ',';
    if (std::isfinite(dt)) out << text::format_real(dt);
    out << ',' << to_string(outcomes[i].predicted_magnitude) << ',';
    if (std::isfinite(dt)) out << to_string(classify_actual_magnitude(dt, t));
    out << '\n';
  }
}

}  // namespace timeshift
