#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "timeshift/error.hpp"
#include "timeshift/evaluation.hpp"
#include "timeshift/features.hpp"
#include "timeshift/logistic.hpp"
#include "timeshift/simulator.hpp"
#include "timeshift/text.hpp"

namespace timeshift {

struct RunPaths {
  std::string input;
  std::string output;
  std::string model;
};

/// Everything one pipeline run depends on. `seed` is the single source of
/// randomness; it replaces sim.rng_seed when simulating.
struct RunConfig {
  std::uint64_t seed = 42;
  double target_interval_s = kTargetIntervalS;
  double C = kDefaultInverseRegularization;
  Thresholds thresholds{};
  RunPaths paths{};
  std::optional<sim::SimParams> sim;
  std::size_t n_participants = 1000;
  std::size_t n_trials = 2;
  std::vector<EngagementLevel> engagement_sequence;  // empty = uniform over levels
  bool balance = true;
  bool standardized_input = false;
  std::vector<double> c_grid;                 // non-empty: pick C by repeated k-fold
  std::string background = "training";        // SHAP background: "training" or "data"
  std::size_t waterfall_sample = 0;
  std::size_t importance_repeats = 10;
  unsigned threads = 0;

  void validate() const {
    thresholds.validate();
    if (!(target_interval_s > 0.0)) throw Error(ErrorKind::InvalidConfig, "target_interval_s must be > 0");
    if (!(C > 0.0)) throw Error(ErrorKind::InvalidConfig, "C must be > 0");
    if (n_participants < 1) throw Error(ErrorKind::InvalidConfig, "n_participants must be >= 1");
    if (n_trials < 2) throw Error(ErrorKind::InvalidConfig, "n_trials must be >= 2");
    if (!engagement_sequence.empty() && engagement_sequence.size() != n_trials)
      throw Error(ErrorKind::InvalidConfig, "engagement_sequence must have n_trials entries");
    for (double c : c_grid)
      if (!(c > 0.0)) throw Error(ErrorKind::InvalidConfig, "c_grid values must be > 0");
    if (background != "training" && background != "data")
      throw Error(ErrorKind::InvalidConfig, "background must be 'training' or 'data'");
    if (importance_repeats < 1) throw Error(ErrorKind::InvalidConfig, "importance_repeats must be >= 1");
    if (sim) {
      try {
        sim->validate();
      } catch (const Error& e) {
        throw Error(ErrorKind::InvalidConfig, e.what());
      }
    }
  }

  sim::SimParams effective_sim() const {
    sim::SimParams p = sim.value_or(sim::SimParams{});
    p.rng_seed = seed;
    p.target_interval_s = target_interval_s;
    return p;
  }

  sim::EngagementAssignment assignment() const {
    if (engagement_sequence.empty()) return sim::EngagementAssignment::random_uniform();
    return sim::EngagementAssignment::fixed(engagement_sequence);
  }
};

// Result-affecting settings only: paths and thread count are excluded, so
// the hash (and every artifact embedding it) is independent of both.
inline nlohmann::json canonical_json(const RunConfig& c) {
  nlohmann::json j;
  j["seed"] = c.seed;
  j["target_interval_s"] = c.target_interval_s;
  j["C"] = c.C;
  j["thresholds"] = {{"prob_low", c.thresholds.prob_low},
                     {"prob_high", c.thresholds.prob_high},
                     {"delta_small", c.thresholds.delta_small}};
  j["sim"] = c.effective_sim();
  j["n_participants"] = c.n_participants;
  j["n_trials"] = c.n_trials;
  nlohmann::json seq = nlohmann::json::array();
  for (auto level : c.engagement_sequence) seq.push_back(to_string(level));
  j["engagement_sequence"] = seq;
  j["balance"] = c.balance;
  j["standardized_input"] = c.standardized_input;
  j["c_grid"] = c.c_grid;
  j["background"] = c.background;
  j["waterfall_sample"] = c.waterfall_sample;
  j["importance_repeats"] = c.importance_repeats;
  return j;
}

inline std::string config_hash(const RunConfig& c) {
  return text::hex64(text::fnv1a64(canonical_json(c).dump()));
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  static const std::vector<std::string> known = {
      "seed",     "target_interval_s", "C",     "thresholds", "paths",
      "sim",      "n_participants",    "n_trials", "engagement_sequence", "balance",
      "standardized_input", "c_grid", "background", "waterfall_sample", "importance_repeats",
      "threads"};
  if (!j.is_object()) throw Error(ErrorKind::InvalidConfig, "config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
  RunConfig c;
  try {
    if (j.contains("seed")) j.at("seed").get_to(c.seed);
    if (j.contains("target_interval_s")) j.at("target_interval_s").get_to(c.target_interval_s);
    if (j.contains("C")) j.at("C").get_to(c.C);
    if (j.contains("thresholds")) {
      const auto& t = j.at("thresholds");
      if (t.contains("prob_low")) t.at("prob_low").get_to(c.thresholds.prob_low);
      if (t.contains("prob_high")) t.at("prob_high").get_to(c.thresholds.prob_high);
      if (t.contains("delta_small")) t.at("delta_small").get_to(c.thresholds.delta_small);
    }
    if (j.contains("paths")) {
      const auto& p = j.at("paths");
      if (p.contains("input")) p.at("input").get_to(c.paths.input);
      if (p.contains("output")) p.at("output").get_to(c.paths.output);
      if (p.contains("model")) p.at("model").get_to(c.paths.model);
    }
    if (j.contains("sim") && !j.at("sim").is_null()) c.sim = j.at("sim").get<sim::SimParams>();
    if (j.contains("n_participants")) j.at("n_participants").get_to(c.n_participants);
    if (j.contains("n_trials")) j.at("n_trials").get_to(c.n_trials);
    if (j.contains("engagement_sequence")) {
      for (const auto& level : j.at("engagement_sequence")) {
        const auto parsed = level.is_number_integer() ? engagement_from_code(level.get<long long>())
                                                      : parse_engagement(level.get<std::string>());
        if (!parsed) throw Error(ErrorKind::InvalidConfig, "bad engagement level " + level.dump());
        c.engagement_sequence.push_back(*parsed);
      }
    }
    if (j.contains("balance")) j.at("balance").get_to(c.balance);
    if (j.contains("standardized_input")) j.at("standardized_input").get_to(c.standardized_input);
    if (j.contains("c_grid")) j.at("c_grid").get_to(c.c_grid);
    if (j.contains("background")) j.at("background").get_to(c.background);
    if (j.contains("waterfall_sample")) j.at("waterfall_sample").get_to(c.waterfall_sample);
    if (j.contains("importance_repeats")) j.at("importance_repeats").get_to(c.importance_repeats);
    if (j.contains("threads")) j.at("threads").get_to(c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::InvalidConfig, e.what());
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open config " + path);
  try {
    return config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::InvalidConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace timeshift
