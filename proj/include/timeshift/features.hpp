#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "timeshift/data_model.hpp"
#include "timeshift/error.hpp"
#include "timeshift/text.hpp"

namespace timeshift {

inline constexpr std::size_t kFeatureCount = 5;
inline constexpr double kTargetIntervalS = 30.0;

template <std::size_t D>
using Row = std::array<double, D>;
using FeatureArray = Row<kFeatureCount>;

// Canonical order; model coefficients, scaler columns and CSV columns follow it.
inline constexpr std::array<std::string_view, kFeatureCount> kFeatureNames = {
    "t1_rel_error", "t1_lower_than_30", "high_visual_sensitivity", "v2_engagement_level",
    "change_in_engagement_level"};

struct FeatureVector {
  double t1_rel_error = 0.0;           // percent
  int t1_lower_than_30 = 0;            // {0,1}
  int high_visual_sensitivity = 0;     // {0,1}
  int v2_engagement_level = 0;         // {0,1,2}
  int change_in_engagement_level = 1;  // {0,1,2}: lower, same, higher

  FeatureArray to_array() const {
    return {t1_rel_error, static_cast<double>(t1_lower_than_30),
            static_cast<double>(high_visual_sensitivity), static_cast<double>(v2_engagement_level),
            static_cast<double>(change_in_engagement_level)};
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;
};

/// (produced − target) / target × 100.
inline double compute_rel_error(double produced_time_s, double target_s = kTargetIntervalS) {
  if (!(produced_time_s > 0.0) || !(target_s > 0.0))
    throw Error(ErrorKind::NonPositiveTime, "produced and target times must be > 0");
  return (produced_time_s - target_s) / target_s * 100.0;
}

// Only a Low-engagement previous trial can reveal high visual sensitivity.
inline int derive_sensitivity(const TrialRecord& prev) noexcept {
  return prev.engagement == EngagementLevel::Low && prev.reported_high_engagement ? 1 : 0;
}

inline int change_in_engagement(EngagementLevel prev, EngagementLevel next) noexcept {
  if (code(next) < code(prev)) return 0;
  if (code(next) == code(prev)) return 1;
  return 2;
}

// Change and next level cannot take opposite extremes: a decrease never lands
// on High and an increase never lands on Low.
inline bool satisfies_dependency(const FeatureVector& f) noexcept {
  if (f.change_in_engagement_level == 0 && f.v2_engagement_level == 2) return false;
  if (f.change_in_engagement_level == 2 && f.v2_engagement_level == 0) return false;
  return true;
}

inline void validate(const FeatureVector& f) {
  const auto in = [](int v, int hi) { return v >= 0 && v <= hi; };
  if (!std::isfinite(f.t1_rel_error) || f.t1_rel_error < -100.0)
    throw Error(ErrorKind::InvalidParams, "t1_rel_error must be finite and >= -100");
  if (!in(f.t1_lower_than_30, 1) || !in(f.high_visual_sensitivity, 1) ||
      !in(f.v2_engagement_level, 2) || !in(f.change_in_engagement_level, 2))
    throw Error(ErrorKind::InvalidParams, "categorical feature out of range");
  if (!satisfies_dependency(f))
    throw Error(ErrorKind::DependencyViolation,
                "V2/Change constraint: change_in_engagement_level=" +
                    std::to_string(f.change_in_engagement_level) +
                    " cannot pair with v2_engagement_level=" +
                    std::to_string(f.v2_engagement_level));
}

inline FeatureVector build_features(const SamplePair& pair, double target_s = kTargetIntervalS) {
  FeatureVector f;
  f.t1_rel_error = compute_rel_error(pair.prev.produced_time_s, target_s);
  f.t1_lower_than_30 = pair.prev.reported_lower_than_30 ? 1 : 0;
  f.high_visual_sensitivity = derive_sensitivity(pair.prev);
  f.v2_engagement_level = code(pair.next.engagement);
  f.change_in_engagement_level = change_in_engagement(pair.prev.engagement, pair.next.engagement);
  return f;
}

// ---------------------------------------------------------------------------
// Standardization

template <std::size_t D>
struct BasicScalerStats {
  Row<D> means{};
  Row<D> std_devs{};  // population standard deviation, each > 0

  friend bool operator==(const BasicScalerStats&, const BasicScalerStats&) = default;
};

using ScalerStats = BasicScalerStats<kFeatureCount>;

enum class ConstantColumnPolicy {
  Reject,     // ConstantColumn error
  UnitScale,  // std_dev = 1, so the column standardizes to 0 (scikit-learn convention)
};

/// Per-column mean and population standard deviation (two-pass).
template <std::size_t D>
BasicScalerStats<D> fit_scaler(std::span<const Row<D>> rows,
                               ConstantColumnPolicy policy = ConstantColumnPolicy::Reject) {
  if (rows.size() < 2) throw Error(ErrorKind::TooFewSamples, "scaler needs at least 2 rows");
  BasicScalerStats<D> stats;
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < D; ++j) {
    double sum = 0.0;
    for (const auto& r : rows) sum += r[j];
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& r : rows) ss += (r[j] - mean) * (r[j] - mean);
    const double sd = std::sqrt(ss / n);
    const bool constant = !(sd > 1e-12 * std::max(1.0, std::abs(mean)));
    if (constant && policy == ConstantColumnPolicy::Reject)
      throw Error(ErrorKind::ConstantColumn, "column " + std::to_string(j) + " is constant", j);
    stats.means[j] = mean;
    stats.std_devs[j] = constant ? 1.0 : sd;
  }
  return stats;
}

inline std::vector<FeatureArray> to_rows(std::span<const FeatureVector> features) {
  std::vector<FeatureArray> rows;
  rows.reserve(features.size());
  for (const auto& f : features) rows.push_back(f.to_array());
  return rows;
}

inline ScalerStats fit_scaler(std::span<const FeatureVector> features) {
  const auto rows = to_rows(features);
  return fit_scaler<kFeatureCount>(std::span<const FeatureArray>(rows));
}

template <std::size_t D>
Row<D> transform(const Row<D>& x, const BasicScalerStats<D>& stats) noexcept {
  Row<D> z{};
  for (std::size_t j = 0; j < D; ++j) z[j] = (x[j] - stats.means[j]) / stats.std_devs[j];
  return z;
}

inline FeatureArray transform(const FeatureVector& f, const ScalerStats& stats) noexcept {
  return transform<kFeatureCount>(f.to_array(), stats);
}

template <std::size_t D>
Row<D> inverse_transform(const Row<D>& z, const BasicScalerStats<D>& stats) noexcept {
  Row<D> x{};
  for (std::size_t j = 0; j < D; ++j) x[j] = z[j] * stats.std_devs[j] + stats.means[j];
  return x;
}

template <std::size_t D>
std::vector<Row<D>> transform_all(std::span<const Row<D>> rows, const BasicScalerStats<D>& stats) {
  std::vector<Row<D>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(transform<D>(r, stats));
  return out;
}

// ---------------------------------------------------------------------------
// Engagement relabeling for experiments without explicit engagement labels.

/// Highest mean non-timing error → High, the baseline scene → Low, the rest →
/// Medium. Ties on the worst score go to the lexicographically smallest id.
inline std::map<std::string, EngagementLevel> label_engagement_from_performance(
    const std::map<std::string, double>& scene_error, const std::string& baseline_scene) {
  if (!scene_error.contains(baseline_scene))
    throw Error(ErrorKind::MissingBaseline, "baseline scene '" + baseline_scene + "' not present");
  if (scene_error.size() < 2) throw Error(ErrorKind::TooFewSamples, "need at least 2 scenes");
  const std::string* worst = nullptr;
  double worst_score = 0.0;
  for (const auto& [scene, score] : scene_error) {
    if (scene == baseline_scene) continue;
    if (worst == nullptr || score > worst_score) {
      worst = &scene;
      worst_score = score;
    }
  }
  std::map<std::string, EngagementLevel> labels;
  for (const auto& [scene, score] : scene_error) {
    if (scene == baseline_scene)
      labels[scene] = EngagementLevel::Low;
    else if (&scene == worst)
      labels[scene] = EngagementLevel::High;
    else
      labels[scene] = EngagementLevel::Medium;
  }
  return labels;
}

// ---------------------------------------------------------------------------
// Feature table: features plus the per-sample bookkeeping the harnesses need.

struct FeatureTable {
  std::vector<std::string> ids;
  std::vector<FeatureVector> features;
  std::vector<int> labels;                 // 1 = Decrease, 0 = Increase
  std::vector<double> deltas;              // ΔT in seconds; NaN when unknown

  std::size_t size() const noexcept { return features.size(); }
  std::vector<FeatureArray> rows() const { return to_rows(features); }

  FeatureTable subset(std::span<const std::size_t> indices) const {
    FeatureTable out;
    for (std::size_t i : indices) {
      out.ids.push_back(ids[i]);
      out.features.push_back(features[i]);
      out.labels.push_back(labels[i]);
      out.deltas.push_back(deltas[i]);
    }
    return out;
  }
};

constexpr int label_code(Direction d) noexcept { return d == Direction::Decrease ? 1 : 0; }
constexpr Direction label_direction(int y) noexcept {
  return y == 1 ? Direction::Decrease : Direction::Increase;
}

inline FeatureTable build_feature_table(const Dataset& dataset,
                                        double target_s = kTargetIntervalS) {
  FeatureTable table;
  for (const auto& s : dataset.samples) {
    auto f = build_features(s, target_s);
    validate(f);
    table.ids.push_back(s.prev.participant_id + "#" + std::to_string(s.prev.trial_index));
    table.features.push_back(f);
    table.labels.push_back(label_code(s.label));
    table.deltas.push_back(s.delta_t_s);
  }
  return table;
}

// Checks the V2/Change invariant over a whole dataset.
inline void validate_dataset(const Dataset& dataset) {
  for (const auto& s : dataset.samples) validate(build_features(s));
}

// ---------------------------------------------------------------------------
// Feature matrix CSV:
// t1_rel_error,t1_lower_than_30,high_visual_sensitivity,v2_engagement_level,
// change_in_engagement_level,label      (label: 1 = decrease, 0 = increase)

inline void write_feature_csv(std::ostream& out, const FeatureTable& table) {
  for (auto name : kFeatureNames) out << name << ',';
  out << "label\n";
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& f = table.features[i];
    out << text::format_real(f.t1_rel_error) << ',' << f.t1_lower_than_30 << ','
        << f.high_visual_sensitivity << ',' << f.v2_engagement_level << ','
        << f.change_in_engagement_level << ',' << table.labels[i] << '\n';
  }
}

// Raw numeric contents of a feature CSV, without domain validation. Used for
// standardized inputs where the columns hold z-scores.
struct FeatureMatrix {
  std::vector<FeatureArray> rows;
  std::vector<int> labels;
  std::vector<std::size_t> line_numbers;
};

inline FeatureMatrix parse_feature_matrix(std::istream& in,
                                          std::vector<std::string>* warnings = nullptr) {
  static constexpr std::array<std::string_view, kFeatureCount + 1> columns = {
      kFeatureNames[0], kFeatureNames[1], kFeatureNames[2], kFeatureNames[3], kFeatureNames[4],
      "label"};
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_data_line(in, line, line_no)) throw Error(ErrorKind::EmptyFile, "no header");
  const auto header = text::split_csv_line(line);
  const auto col = detail::resolve_columns(header, columns, {}, warnings);
  FeatureMatrix m;
  while (detail::next_data_line(in, line, line_no)) {
    const auto fields = text::split_csv_line(line);
    const auto bad = [&](const std::string& why) {
      return Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": " + why, line_no);
    };
    if (fields.size() < header.size()) throw bad("too few fields");
    FeatureArray row{};
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      const auto v = text::parse_real(fields[col[j]]);
      if (!v || !std::isfinite(*v)) throw bad(std::string(kFeatureNames[j]) + " is not a number");
      row[j] = *v;
    }
    const std::string label = text::lower(text::trim(fields[col[kFeatureCount]]));
    int y = -1;
    if (label == "1" || label == "decrease") y = 1;
    if (label == "0" || label == "increase") y = 0;
    if (y < 0) throw bad("label must be 0/1 or increase/decrease");
    m.rows.push_back(row);
    m.labels.push_back(y);
    m.line_numbers.push_back(line_no);
  }
  if (m.rows.empty()) throw Error(ErrorKind::EmptyFile, "header only");
  return m;
}

/// Reads a raw feature CSV and enforces every FeatureVector invariant,
/// including the V2/Change dependency.
inline FeatureTable parse_feature_csv(std::istream& in,
                                      std::vector<std::string>* warnings = nullptr) {
  const auto m = parse_feature_matrix(in, warnings);
  FeatureTable table;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& r = m.rows[i];
    const auto as_int = [&](std::size_t j) {
      if (r[j] != std::floor(r[j]))
        throw Error(ErrorKind::MalformedRow,
                    "line " + std::to_string(m.line_numbers[i]) + ": " +
                        std::string(kFeatureNames[j]) + " must be an integer code",
                    m.line_numbers[i]);
      return static_cast<int>(r[j]);
    };
    FeatureVector f{r[0], as_int(1), as_int(2), as_int(3), as_int(4)};
    try {
      validate(f);
    } catch (const Error& e) {
      throw Error(e.kind(), "line " + std::to_string(m.line_numbers[i]) + ": " + e.what(),
                  m.line_numbers[i]);
    }
    table.ids.push_back("row" + std::to_string(i + 1));
    table.features.push_back(f);
    table.labels.push_back(m.labels[i]);
    table.deltas.push_back(std::nan(""));
  }
  return table;
}

inline FeatureTable load_feature_csv(const std::string& path,
                                     std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return parse_feature_csv(in, warnings);
}

inline FeatureMatrix load_feature_matrix(const std::string& path,
                                         std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return parse_feature_matrix(in, warnings);
}

}  // namespace timeshift
