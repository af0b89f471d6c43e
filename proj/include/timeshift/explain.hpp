#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "timeshift/error.hpp"
#include "timeshift/evaluation.hpp"
#include "timeshift/features.hpp"
#include "timeshift/logistic.hpp"
#include "timeshift/random.hpp"
#include "timeshift/text.hpp"

namespace timeshift {

// Additive log-odds attribution: base_logit + Σ phi = output_logit.
template <std::size_t D>
struct BasicShapAttribution {
  double base_logit = 0.0;
  Row<D> phi{};
  double output_logit = 0.0;
  double output_probability = 0.5;
};

using ShapAttribution = BasicShapAttribution<kFeatureCount>;

/// Exact SHAP values of a linear logit under feature independence:
/// phi_j = w_j (z_j − background_j), base = b + w·background.
template <std::size_t D>
BasicShapAttribution<D> shap_values(const BasicLogisticModel<D>& model, const Row<D>& z,
                                    const Row<D>& background_means = {}) {
  BasicShapAttribution<D> a;
  a.base_logit = model.logit(background_means);
  for (std::size_t j = 0; j < D; ++j) a.phi[j] = model.coefficients[j] * (z[j] - background_means[j]);
  a.output_logit = model.logit(z);
  a.output_probability = sigmoid(a.output_logit);
  return a;
}

// Standardized-space mean of a reference set; zero when the scaler was fit
// on that same set.
template <std::size_t D>
Row<D> background_means(std::span<const Row<D>> Z) {
  Row<D> mean{};
  if (Z.empty()) return mean;
  for (const auto& z : Z)
    for (std::size_t j = 0; j < D; ++j) mean[j] += z[j];
  for (double& m : mean) m /= static_cast<double>(Z.size());
  return mean;
}

struct ShapSummary {
  std::size_t count = 0;
  FeatureArray mean_phi{};
  FeatureArray sd_phi{};  // population
  FeatureArray mean_abs_phi{};
  double mean_output_probability = 0.0;
};

using ShapPredicate = std::function<bool(const FeatureVector&, const ShapAttribution&)>;

/// Per-feature aggregation over all attributions or the subgroup selected by
/// `group`. `raw` pairs each attribution with its unstandardized features and
/// may be empty when no predicate is given.
inline ShapSummary aggregate_shap(std::span<const ShapAttribution> attributions,
                                  std::span<const FeatureVector> raw = {},
                                  const ShapPredicate& group = {},
                                  const std::string& group_name = "group") {
  if (!raw.empty() && raw.size() != attributions.size())
    throw Error(ErrorKind::LengthMismatch, "attributions and raw features differ in length");
  if (group && raw.empty())
    throw Error(ErrorKind::InvalidParams, "a group predicate needs raw feature values");
  std::vector<const ShapAttribution*> members;
  for (std::size_t i = 0; i < attributions.size(); ++i)
    if (!group || group(raw[i], attributions[i])) members.push_back(&attributions[i]);
  if (members.empty()) throw Error(ErrorKind::EmptyGroup, group_name + " selects no samples");

  ShapSummary s;
  s.count = members.size();
  const double n = static_cast<double>(s.count);
  for (const auto* a : members) {
    for (std::size_t j = 0; j < kFeatureCount; ++j) {
      s.mean_phi[j] += a->phi[j];
      s.mean_abs_phi[j] += std::abs(a->phi[j]);
    }
    s.mean_output_probability += a->output_probability;
  }
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    s.mean_phi[j] /= n;
    s.mean_abs_phi[j] /= n;
  }
  s.mean_output_probability /= n;
  for (const auto* a : members)
    for (std::size_t j = 0; j < kFeatureCount; ++j)
      s.sd_phi[j] += (a->phi[j] - s.mean_phi[j]) * (a->phi[j] - s.mean_phi[j]);
  for (double& v : s.sd_phi) v = std::sqrt(v / n);
  return s;
}

inline nlohmann::json summary_json(const ShapSummary& s) {
  nlohmann::json features = nlohmann::json::array();
  for (std::size_t j = 0; j < kFeatureCount; ++j)
    features.push_back({{"feature", kFeatureNames[j]},
                        {"mean_phi", s.mean_phi[j]},
                        {"sd_phi", s.sd_phi[j]},
                        {"mean_abs_phi", s.mean_abs_phi[j]}});
  return {{"count", s.count},
          {"mean_output_probability", s.mean_output_probability},
          {"features", features}};
}

// ---------------------------------------------------------------------------
// Waterfall: entries by |phi| descending, ties in canonical feature order.

struct WaterfallEntry {
  std::string feature;
  double value = 0.0;  // raw feature value
  double phi = 0.0;
};

struct Waterfall {
  double base = 0.0;
  std::vector<WaterfallEntry> entries;
  double output_logit = 0.0;
  double output_probability = 0.5;
};

inline Waterfall make_waterfall(const ShapAttribution& a, const FeatureArray& raw_values) {
  std::array<std::size_t, kFeatureCount> order{};
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) {
    return std::abs(a.phi[l]) > std::abs(a.phi[r]);
  });
  Waterfall w;
  w.base = a.base_logit;
  for (std::size_t j : order) w.entries.push_back({std::string(kFeatureNames[j]), raw_values[j], a.phi[j]});
  w.output_logit = a.output_logit;
  w.output_probability = a.output_probability;
  return w;
}

inline nlohmann::json waterfall_json(const Waterfall& w) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : w.entries)
    entries.push_back({{"feature", e.feature}, {"value", e.value}, {"phi", e.phi}});
  return {{"base", w.base},
          {"base_probability", sigmoid(w.base)},
          {"entries", entries},
          {"output_logit", w.output_logit},
          {"output_probability", w.output_probability}};
}

// feature,raw_value,standardized_value,phi: one line per (sample, feature).
inline void write_shap_scatter_csv(std::ostream& out, std::span<const ShapAttribution> attributions,
                                   std::span<const FeatureArray> raw,
                                   std::span<const FeatureArray> standardized) {
  if (attributions.size() != raw.size() || raw.size() != standardized.size())
    throw Error(ErrorKind::LengthMismatch, "scatter inputs differ in length");
  out << "feature,raw_value,standardized_value,phi\n";
  for (std::size_t j = 0; j < kFeatureCount; ++j)
    for (std::size_t i = 0; i < attributions.size(); ++i)
      out << kFeatureNames[j] << ',' << text::format_real(raw[i][j]) << ','
          << text::format_real(standardized[i][j]) << ',' << text::format_real(attributions[i].phi[j])
          << '\n';
}

// ---------------------------------------------------------------------------
// Permutation feature importance

enum class ImportanceMetric { Accuracy, F1 };

struct FeatureImportance {
  double mean_drop = 0.0;
  double sd_drop = 0.0;  // population, over repeats
};

// Default permutation source: seeded Fisher-Yates.
struct ShufflePermuter {
  void operator()(std::span<std::size_t> perm, Rng& rng) const { rng.shuffle(perm); }
};

// Leaves the column untouched; permuting with it must cost nothing.
struct IdentityPermuter {
  void operator()(std::span<std::size_t>, Rng&) const {}
};

template <std::size_t D>
double score_model(const BasicLogisticModel<D>& model, std::span<const Row<D>> Z,
                   std::span<const int> y, ImportanceMetric metric) {
  std::vector<Direction> predicted, actual;
  predicted.reserve(Z.size());
  for (std::size_t i = 0; i < Z.size(); ++i) {
    predicted.push_back(classify_direction(predict_proba(model, Z[i])));
    actual.push_back(label_direction(y[i]));
  }
  const auto m = metrics(predicted, actual);
  return metric == ImportanceMetric::Accuracy ? m.accuracy : m.f1;
}

/// For each feature j and repeat r: permute column j with the substream
/// (seed, j, r), rescore, record baseline − permuted. Z is standardized.
template <std::size_t D, typename Permuter = ShufflePermuter>
std::array<FeatureImportance, D> permutation_importance(
    const BasicLogisticModel<D>& model, std::span<const Row<D>> Z, std::span<const int> y,
    ImportanceMetric metric = ImportanceMetric::Accuracy, std::size_t n_repeats = 10,
    std::uint64_t seed = 0, Permuter permuter = {}) {
  if (Z.size() != y.size()) throw Error(ErrorKind::LengthMismatch, "rows and labels differ in length");
  if (Z.size() < 20) throw Error(ErrorKind::TooFewSamples, "permutation importance needs n >= 20");
  if (n_repeats < 1) throw Error(ErrorKind::InvalidParams, "n_repeats must be >= 1");
  const double baseline = score_model<D>(model, Z, y, metric);
  std::array<FeatureImportance, D> out{};
  std::vector<Row<D>> permuted(Z.begin(), Z.end());
  std::vector<std::size_t> perm(Z.size());
  for (std::size_t j = 0; j < D; ++j) {
    std::vector<double> drops;
    for (std::size_t r = 0; r < n_repeats; ++r) {
      Rng rng = Rng::substream(derive_seed(seed, j), r);
      std::iota(perm.begin(), perm.end(), 0);
      permuter(std::span<std::size_t>(perm), rng);
      for (std::size_t i = 0; i < Z.size(); ++i) permuted[i][j] = Z[perm[i]][j];
      drops.push_back(baseline - score_model<D>(model, std::span<const Row<D>>(permuted), y, metric));
    }
    for (std::size_t i = 0; i < Z.size(); ++i) permuted[i][j] = Z[i][j];
    const double mean = std::accumulate(drops.begin(), drops.end(), 0.0) / static_cast<double>(n_repeats);
    double ss = 0.0;
    for (double d : drops) ss += (d - mean) * (d - mean);
    out[j] = {mean, std::sqrt(ss / static_cast<double>(n_repeats))};
  }
  return out;
}

}  // namespace timeshift
