#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "timeshift/data_model.hpp"
#include "timeshift/error.hpp"
#include "timeshift/features.hpp"
#include "timeshift/parallel.hpp"
#include "timeshift/random.hpp"

// Attentional-gate generative model: a pacemaker emits ticks, an attention
// gate passes a fraction of them into a counter, and the interval ends when
// the counter reaches the reference-memory tick count.
namespace timeshift::sim {

// Produced times are truncated from below at this value.
inline constexpr double kMinProducedS = 0.5;

struct SimParams {
  double base_clock_rate_hz = 10.0;
  // Indexed by EngagementLevel code; non-increasing in engagement.
  std::array<double, 3> gate_width_by_engagement = {1.0, 0.85, 0.7};
  double arousal_gain = 0.05;
  // Unset means base_clock_rate_hz × gate(Low) × target_interval_s.
  std::optional<double> reference_ticks;
  double memory_correction_weight = 0.3;
  double regression_weight = 0.3;
  double weber_fraction = 0.15;
  double population_mean_s = 45.0;
  double target_interval_s = kTargetIntervalS;
  double report_flip_probability = 0.1;
  double sensitivity_prevalence = 0.06;
  std::uint64_t rng_seed = 42;

  double gate(EngagementLevel level) const { return gate_width_by_engagement[code(level)]; }

  double initial_reference_ticks() const {
    return reference_ticks.value_or(base_clock_rate_hz * gate(EngagementLevel::Low) *
                                    target_interval_s);
  }

  // Ticks per target-equivalent second.
  double ticks_per_second() const { return base_clock_rate_hz * gate(EngagementLevel::Low); }

  void validate() const {
    const auto fail = [](const std::string& why) { throw Error(ErrorKind::InvalidParams, why); };
    if (!(base_clock_rate_hz > 0.0) || !std::isfinite(base_clock_rate_hz))
      fail("base_clock_rate_hz must be > 0");
    for (double g : gate_width_by_engagement)
      if (!(g > 0.0 && g <= 1.0)) fail("gate widths must lie in (0, 1]");
    if (gate_width_by_engagement[1] > gate_width_by_engagement[0] ||
        gate_width_by_engagement[2] > gate_width_by_engagement[1])
      fail("gate widths must be non-increasing in engagement");
    if (!(arousal_gain >= 0.0) || !std::isfinite(arousal_gain)) fail("arousal_gain must be >= 0");
    if (reference_ticks && !(*reference_ticks > 0.0)) fail("reference_ticks must be > 0");
    const auto unit = [](double w) { return w >= 0.0 && w <= 1.0; };
    if (!unit(memory_correction_weight) || !unit(regression_weight))
      fail("memory weights must lie in [0, 1]");
    if (memory_correction_weight + regression_weight > 1.0 + 1e-12)
      fail("memory_correction_weight + regression_weight must be <= 1");
    if (!(weber_fraction >= 0.0) || !std::isfinite(weber_fraction))
      fail("weber_fraction must be >= 0");
    if (!(population_mean_s > 0.0)) fail("population_mean_s must be > 0");
    if (!(target_interval_s > 0.0)) fail("target_interval_s must be > 0");
    if (!unit(report_flip_probability)) fail("report_flip_probability must lie in [0, 1]");
    if (!unit(sensitivity_prevalence)) fail("sensitivity_prevalence must lie in [0, 1]");
  }
};

inline void to_json(nlohmann::json& j, const SimParams& p) {
  j = nlohmann::json{
      {"base_clock_rate_hz", p.base_clock_rate_hz},
      {"gate_width_by_engagement",
       {{"low", p.gate_width_by_engagement[0]},
        {"medium", p.gate_width_by_engagement[1]},
        {"high", p.gate_width_by_engagement[2]}}},
      {"arousal_gain", p.arousal_gain},
      {"reference_ticks", p.initial_reference_ticks()},
      {"memory_correction_weight", p.memory_correction_weight},
      {"regression_weight", p.regression_weight},
      {"weber_fraction", p.weber_fraction},
      {"population_mean_s", p.population_mean_s},
      {"target_interval_s", p.target_interval_s},
      {"report_flip_probability", p.report_flip_probability},
      {"sensitivity_prevalence", p.sensitivity_prevalence},
      {"rng_seed", p.rng_seed},
  };
}

// Missing keys keep their defaults; unknown keys are rejected.
inline void from_json(const nlohmann::json& j, SimParams& p) {
  static const std::array<std::string, 12> known = {
      "base_clock_rate_hz", "gate_width_by_engagement", "arousal_gain",
      "reference_ticks",    "memory_correction_weight", "regression_weight",
      "weber_fraction",     "population_mean_s",        "target_interval_s",
      "report_flip_probability", "sensitivity_prevalence", "rng_seed"};
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "sim params must be an object");
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(ErrorKind::InvalidConfig, "unknown sim parameter '" + key + "'");
  const auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) j.at(key).get_to(field);
  };
  get("base_clock_rate_hz", p.base_clock_rate_hz);
  if (j.contains("gate_width_by_engagement")) {
    const auto& g = j.at("gate_width_by_engagement");
    if (g.is_array()) {
      g.get_to(p.gate_width_by_engagement);
    } else {
      for (auto level : kEngagementLevels) {
        const std::string key(to_string(level));
        if (g.contains(key)) g.at(key).get_to(p.gate_width_by_engagement[code(level)]);
      }
    }
  }
  get("arousal_gain", p.arousal_gain);
  if (j.contains("reference_ticks") && !j.at("reference_ticks").is_null())
    p.reference_ticks = j.at("reference_ticks").get<double>();
  get("memory_correction_weight", p.memory_correction_weight);
  get("regression_weight", p.regression_weight);
  get("weber_fraction", p.weber_fraction);
  get("population_mean_s", p.population_mean_s);
  get("target_interval_s", p.target_interval_s);
  get("report_flip_probability", p.report_flip_probability);
  get("sensitivity_prevalence", p.sensitivity_prevalence);
  get("rng_seed", p.rng_seed);
}

// Clock rate, boosted only by an increase in engagement over the previous trial.
inline double effective_clock_rate(const SimParams& params, EngagementLevel engagement,
                                   std::optional<EngagementLevel> prev_engagement) {
  if (!prev_engagement) return params.base_clock_rate_hz;
  const int rise = std::max(0, code(engagement) - code(*prev_engagement));
  return params.base_clock_rate_hz * (1.0 + params.arousal_gain * rise);
}

inline double noiseless_production(const SimParams& params, EngagementLevel engagement,
                                   std::optional<EngagementLevel> prev_engagement,
                                   double reference_ticks) {
  return reference_ticks /
         (effective_clock_rate(params, engagement, prev_engagement) * params.gate(engagement));
}

/// One produced interval: reference / (rate × gate), times (1 + ε) with
/// ε ~ N(0, weber_fraction), redrawn until the result exceeds 0.5 s.
inline double simulate_trial(const SimParams& params, EngagementLevel engagement,
                             std::optional<EngagementLevel> prev_engagement,
                             double reference_ticks, Rng& rng) {
  const double clean = noiseless_production(params, engagement, prev_engagement, reference_ticks);
  if (params.weber_fraction == 0.0) return std::max(clean, kMinProducedS);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double produced = clean * (1.0 + params.weber_fraction * rng.normal());
    if (produced > kMinProducedS) return produced;
  }
  return kMinProducedS;
}

/// Reference-memory recalibration after a trial, in target-equivalent seconds:
///   s' = (1 − w_c − w_r)·s + w_c·c + w_r·population_mean
/// where the correction target c mirrors the last production about the target
/// in the direction opposite the reported error: c = T + |last − T| when the
/// participant reported undershooting, else c = T − |last − T|. The deviation
/// is clipped to T − 0.5 s so c stays positive.
inline double update_reference_memory(const SimParams& params, double old_reference_ticks,
                                      double last_produced_s, bool reported_lower,
                                      double population_mean_s) {
  const double target = params.target_interval_s;
  const double per_second = params.ticks_per_second();
  const double s_old = old_reference_ticks / per_second;
  const double deviation = std::min(std::abs(last_produced_s - target), target - kMinProducedS);
  const double correction = reported_lower ? target + deviation : target - deviation;
  const double w_c = params.memory_correction_weight;
  const double w_r = params.regression_weight;
  const double s_new = (1.0 - w_c - w_r) * s_old + w_c * correction + w_r * population_mean_s;
  return s_new * per_second;
}

struct EngagementAssignment {
  enum class Mode { RandomUniform, Fixed };
  Mode mode = Mode::RandomUniform;
  std::vector<EngagementLevel> sequence;  // used when mode == Fixed; one per trial

  static EngagementAssignment random_uniform() { return {}; }
  static EngagementAssignment fixed(std::vector<EngagementLevel> seq) {
    return {Mode::Fixed, std::move(seq)};
  }
};

inline std::string participant_id(std::size_t index) {
  std::string digits = std::to_string(index + 1);
  if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
  return "sim" + digits;
}

/// Simulates one participant from their own substream. The draw order is
/// fixed: sensitivity, then per trial engagement, timing noise, report flip.
inline std::vector<TrialRecord> simulate_participant(const SimParams& params, std::size_t index,
                                                     std::size_t n_trials,
                                                     const EngagementAssignment& assignment) {
  Rng rng = Rng::substream(params.rng_seed, index);
  const bool sensitive = rng.bernoulli(params.sensitivity_prevalence);
  std::vector<TrialRecord> trials;
  trials.reserve(n_trials);
  double reference = params.initial_reference_ticks();
  std::optional<EngagementLevel> prev;
  for (std::size_t t = 0; t < n_trials; ++t) {
    const EngagementLevel level = assignment.mode == EngagementAssignment::Mode::Fixed
                                      ? assignment.sequence[t]
                                      : kEngagementLevels[rng.below(3)];
    TrialRecord r;
    r.participant_id = participant_id(index);
    r.trial_index = static_cast<int>(t + 1);
    r.engagement = level;
    r.produced_time_s = simulate_trial(params, level, prev, reference, rng);
    r.reported_lower_than_30 = !(r.produced_time_s > params.target_interval_s);
    if (rng.bernoulli(params.report_flip_probability))
      r.reported_lower_than_30 = !r.reported_lower_than_30;
    r.reported_high_engagement = level == EngagementLevel::High || sensitive;
    reference = update_reference_memory(params, reference, r.produced_time_s,
                                        r.reported_lower_than_30, params.population_mean_s);
    prev = level;
    trials.push_back(std::move(r));
  }
  return trials;
}

inline std::vector<TrialRecord> generate_trials(
    const SimParams& params, std::size_t n_participants, std::size_t n_trials,
    const EngagementAssignment& assignment = EngagementAssignment::random_uniform(),
    unsigned threads = 1) {
  params.validate();
  if (n_participants < 1) throw Error(ErrorKind::InvalidParams, "n_participants must be >= 1");
  if (n_trials < 2) throw Error(ErrorKind::InvalidParams, "n_trials must be >= 2");
  if (assignment.mode == EngagementAssignment::Mode::Fixed &&
      assignment.sequence.size() != n_trials)
    throw Error(ErrorKind::InvalidParams, "fixed engagement sequence must have n_trials entries");

  std::vector<std::vector<TrialRecord>> per_participant(n_participants);
  parallel_for(n_participants, threads, [&](std::size_t i) {
    per_participant[i] = simulate_participant(params, i, n_trials, assignment);
  });
  std::vector<TrialRecord> trials;
  trials.reserve(n_participants * n_trials);
  for (auto& group : per_participant)
    for (auto& t : group) trials.push_back(std::move(t));
  return trials;
}

inline Dataset generate_dataset(
    const SimParams& params, std::size_t n_participants, std::size_t n_trials,
    const EngagementAssignment& assignment = EngagementAssignment::random_uniform(),
    unsigned threads = 1) {
  const auto trials = generate_trials(params, n_participants, n_trials, assignment, threads);
  return make_dataset(trials, Provenance::Synthetic, params.rng_seed);
}

}  // namespace timeshift::sim

namespace timeshift {

// Rule-based predictors. Same-level transitions predict Increase, the
// population majority direction.
inline Direction attention_baseline(EngagementLevel prev, EngagementLevel next) noexcept {
  return code(next) < code(prev) ? Direction::Decrease : Direction::Increase;
}

inline Direction arousal_baseline(EngagementLevel prev, EngagementLevel next) noexcept {
  return code(next) > code(prev) ? Direction::Decrease : Direction::Increase;
}

}  // namespace timeshift
