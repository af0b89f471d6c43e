// timeshift: simulate -> extract -> train -> evaluate -> predict -> explain.
//
// Exit codes: 0 success, 2 input or configuration error, 3 optimizer
// non-convergence (artifacts are still written and marked).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "timeshift/timeshift.hpp"

#ifndef TIMESHIFT_VERSION
#define TIMESHIFT_VERSION "dev"
#endif

namespace ts = timeshift;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNonConvergence = 3;

// Independent random streams derived from the run seed.
constexpr std::uint64_t kStreamBalance = 1;
constexpr std::uint64_t kStreamGrid = 2;
constexpr std::uint64_t kStreamImportance = 3;

std::string version_text() {
  std::ostringstream out;
  out << "timeshift " << TIMESHIFT_VERSION << "\n"
      << "pinned model (standardized features): intercept " << ts::text::format_real(ts::kPinnedIntercept);
  for (std::size_t j = 0; j < ts::kFeatureCount; ++j)
    out << ", " << ts::kFeatureNames[j] << " " << ts::text::format_real(ts::kPinnedCoefficients[j]);
  out << ", C " << ts::text::format_real(ts::kDefaultInverseRegularization);
  return out.str();
}

std::string read_file(const std::string& path) {
  if (path.empty()) throw ts::Error(ts::ErrorKind::InvalidConfig, "no input path given");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ts::Error(ts::ErrorKind::Io, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  if (path.empty()) throw ts::Error(ts::ErrorKind::InvalidConfig, "no output path given");
  const fs::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ts::Error(ts::ErrorKind::Io, "cannot write " + path);
  out << contents;
  if (!out) throw ts::Error(ts::ErrorKind::Io, "write failed for " + path);
}

void write_json(const std::string& path, const json& j) { write_file(path, j.dump(2) + "\n"); }

// report.json -> report.<suffix>
std::string sibling(const std::string& output, const std::string& suffix) {
  fs::path p(output);
  p.replace_extension();
  return p.string() + "." + suffix;
}

std::string content_hash(const std::string& bytes) {
  return ts::text::hex64(ts::text::fnv1a64(bytes));
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << json{{"warning", w}}.dump() << '\n';
}

json class_counts(std::span<const int> labels) {
  std::size_t dec = 0;
  for (int y : labels) dec += y == 1 ? 1 : 0;
  return {{"increase", labels.size() - dec}, {"decrease", dec}};
}

json thresholds_json(const ts::Thresholds& t) {
  return {{"prob_low", t.prob_low}, {"prob_high", t.prob_high}, {"delta_small", t.delta_small}};
}

json provenance(const ts::RunConfig& cfg) {
  return {{"config_hash", ts::config_hash(cfg)}, {"seed", cfg.seed}, {"version", TIMESHIFT_VERSION}};
}

// ---------------------------------------------------------------------------
// Inputs

struct Input {
  ts::FeatureTable table;
  std::vector<ts::FeatureArray> standardized;  // filled only for standardized input
  bool from_trials = false;
  std::string hash;
};

bool looks_like_trials(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string line;
  std::size_t line_no = 0;
  if (!ts::detail::next_data_line(in, line, line_no)) return false;
  for (const auto& name : ts::text::split_csv_line(line))
    if (ts::text::trim(name) == "participant_id") return true;
  return false;
}

// Accepts a trial CSV or a feature CSV (raw, or z-scores in standardized mode).
Input load_input(const ts::RunConfig& cfg) {
  const std::string bytes = read_file(cfg.paths.input);
  Input in;
  in.hash = content_hash(bytes);
  std::istringstream stream(bytes);
  std::vector<std::string> warnings;
  if (looks_like_trials(bytes)) {
    if (cfg.standardized_input)
      throw ts::Error(ts::ErrorKind::InvalidConfig, "standardized input must be a feature CSV");
    const auto trials = ts::parse_trials(stream, &warnings);
    const auto dataset = ts::make_dataset(trials, ts::Provenance::Human);
    if (dataset.samples.empty())
      throw ts::Error(ts::ErrorKind::TooFewSamples, "no consecutive trial pairs in input");
    in.table = ts::build_feature_table(dataset, cfg.target_interval_s);
    in.from_trials = true;
  } else if (cfg.standardized_input) {
    const auto m = ts::parse_feature_matrix(stream, &warnings);
    in.standardized = m.rows;
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
      in.table.ids.push_back("row" + std::to_string(i + 1));
      in.table.features.emplace_back();
      in.table.labels.push_back(m.labels[i]);
      in.table.deltas.push_back(std::nan(""));
    }
  } else {
    in.table = ts::parse_feature_csv(stream, &warnings);
  }
  print_warnings(warnings);
  return in;
}

ts::LogisticModel load_model(const ts::RunConfig& cfg) {
  if (cfg.paths.model.empty()) throw ts::Error(ts::ErrorKind::InvalidConfig, "a model is required (--model)");
  if (cfg.paths.model == "pinned") return ts::pinned_model();
  const std::string bytes = read_file(cfg.paths.model);
  try {
    return ts::model_from_json(json::parse(bytes));
  } catch (const json::parse_error& e) {
    throw ts::Error(ts::ErrorKind::InvalidConfig, std::string("model is not valid JSON: ") + e.what());
  }
}

std::vector<ts::FeatureArray> standardized_rows(const Input& in, const ts::LogisticModel& model) {
  if (!in.standardized.empty()) return in.standardized;
  std::vector<ts::FeatureArray> z;
  z.reserve(in.table.size());
  for (const auto& f : in.table.features) z.push_back(ts::transform(f, model.scaler));
  return z;
}

std::vector<ts::FeatureArray> raw_rows(const Input& in, const ts::LogisticModel& model) {
  if (in.standardized.empty()) return in.table.rows();
  std::vector<ts::FeatureArray> raw;
  for (const auto& z : in.standardized) raw.push_back(ts::inverse_transform(z, model.scaler));
  return raw;
}

std::vector<ts::PredictionOutcome> predict_all(const ts::LogisticModel& model,
                                               std::span<const ts::FeatureArray> z,
                                               const ts::Thresholds& t) {
  std::vector<ts::PredictionOutcome> out;
  out.reserve(z.size());
  for (const auto& row : z) out.push_back(ts::make_outcome(ts::predict_proba(model, row), t));
  return out;
}

std::vector<ts::Direction> directions(std::span<const ts::PredictionOutcome> outcomes) {
  std::vector<ts::Direction> d;
  for (const auto& o : outcomes) d.push_back(o.direction);
  return d;
}

json predictor_json(std::span<const ts::PredictorRow> rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"model", r.name},
                   {"precision", r.metrics.precision},
                   {"recall", r.metrics.recall},
                   {"accuracy", r.metrics.accuracy},
                   {"f1", r.metrics.f1},
                   {"n", r.metrics.n}});
  return out;
}

bool all_deltas_known(const ts::FeatureTable& table) {
  for (double d : table.deltas)
    if (!std::isfinite(d)) return false;
  return !table.deltas.empty();
}

// ---------------------------------------------------------------------------
// Commands

int cmd_simulate(const ts::RunConfig& cfg) {
  const auto params = cfg.effective_sim();
  const auto trials = ts::sim::generate_trials(params, cfg.n_participants, cfg.n_trials, cfg.assignment(),
                                               ts::resolve_threads(cfg.threads));
  std::ostringstream csv;
  ts::write_trials(csv, trials);
  write_file(cfg.paths.output, csv.str());

  const auto dataset = ts::make_dataset(trials, ts::Provenance::Synthetic, cfg.seed);
  const std::size_t dec = dataset.count(ts::Direction::Decrease);
  double trial1_sum = 0.0;
  std::size_t trial1_n = 0;
  for (const auto& t : trials)
    if (t.trial_index == 1) {
      trial1_sum += t.produced_time_s;
      ++trial1_n;
    }
  json manifest = provenance(cfg);
  manifest["artifact"] = "trials";
  manifest["artifact_hash"] = content_hash(csv.str());
  manifest["params"] = params;
  manifest["n_participants"] = cfg.n_participants;
  manifest["n_trials"] = cfg.n_trials;
  manifest["rows"] = trials.size();
  manifest["pairs"] = dataset.samples.size();
  manifest["class_balance"] = {
      {"increase", dataset.samples.size() - dec},
      {"decrease", dec},
      {"decrease_fraction", dataset.samples.empty() ? 0.0 : static_cast<double>(dec) / dataset.samples.size()}};
  manifest["trial1_mean_produced_s"] = trial1_n ? trial1_sum / trial1_n : 0.0;
  write_json(sibling(cfg.paths.output, "manifest.json"), manifest);
  return kExitOk;
}

int cmd_extract(const ts::RunConfig& cfg) {
  const std::string bytes = read_file(cfg.paths.input);
  std::istringstream stream(bytes);
  std::vector<std::string> warnings;
  const auto trials = ts::parse_trials(stream, &warnings);
  print_warnings(warnings);
  const auto table = ts::build_feature_table(ts::make_dataset(trials, ts::Provenance::Human),
                                             cfg.target_interval_s);
  std::ostringstream csv;
  ts::write_feature_csv(csv, table);
  write_file(cfg.paths.output, csv.str());

  json manifest = provenance(cfg);
  manifest["artifact"] = "features";
  manifest["artifact_hash"] = content_hash(csv.str());
  manifest["input_hash"] = content_hash(bytes);
  manifest["rows"] = table.size();
  manifest["class_counts"] = class_counts(table.labels);
  write_json(sibling(cfg.paths.output, "manifest.json"), manifest);
  return kExitOk;
}

int cmd_train(const ts::RunConfig& cfg) {
  const Input in = load_input(cfg);
  const bool standardized = !in.standardized.empty();

  double C = cfg.C;
  json grid_report = nullptr;
  if (!cfg.c_grid.empty()) {
    if (standardized)
      throw ts::Error(ts::ErrorKind::InvalidConfig, "c_grid needs raw features, not standardized input");
    ts::KFoldOptions ko;
    ko.grid = cfg.c_grid;
    ko.seed = ts::derive_seed(cfg.seed, kStreamGrid);
    ko.undersample_each_repeat = cfg.balance;
    const auto kr = ts::kfold_cv(in.table, ko);
    C = kr.best_C;
    grid_report = {{"grid", kr.grid}, {"mean_f1", kr.mean_f1}, {"best_C", kr.best_C},
                   {"k", ko.k}, {"repeats", ko.repeats}};
  }

  std::vector<std::size_t> kept(in.table.size());
  std::iota(kept.begin(), kept.end(), 0);
  if (cfg.balance) kept = ts::undersample_indices(in.table.labels, ts::derive_seed(cfg.seed, kStreamBalance));

  std::vector<ts::FeatureArray> rows;
  std::vector<int> y;
  for (std::size_t i : kept) {
    rows.push_back(standardized ? in.standardized[i] : in.table.features[i].to_array());
    y.push_back(in.table.labels[i]);
  }
  ts::ScalerStats scaler;
  scaler.means.fill(0.0);
  scaler.std_devs.fill(1.0);
  if (!standardized) scaler = ts::fit_scaler<ts::kFeatureCount>(std::span<const ts::FeatureArray>(rows));
  const auto Z = ts::transform_all<ts::kFeatureCount>(std::span<const ts::FeatureArray>(rows), scaler);

  ts::FitOptions fo;
  fo.C = C;
  auto result = ts::fit<ts::kFeatureCount>(std::span<const ts::FeatureArray>(Z), y, fo);
  result.model.scaler = scaler;
  result.model.seed = cfg.seed;
  result.model.trained_on = "input:" + in.hash;

  json out = ts::model_to_json(result.model);
  out["provenance"] = provenance(cfg);
  out["status"] = result.converged() ? "converged" : "non_convergence";
  out["fit"] = {{"iterations", result.iterations},
                {"gradient_norm", result.gradient_norm},
                {"loss", result.loss}};
  out["class_counts"] = {{"input", class_counts(in.table.labels)}, {"train", class_counts(y)}};
  out["balanced"] = cfg.balance;
  out["c_selection"] = grid_report;
  write_json(cfg.paths.output, out);
  if (!result.converged()) {
    std::cerr << json{{"warning", "optimizer did not converge"}, {"gradient_norm", result.gradient_norm}}.dump()
              << '\n';
    return kExitNonConvergence;
  }
  return kExitOk;
}

int cmd_evaluate(const ts::RunConfig& cfg) {
  const Input in = load_input(cfg);
  const bool standardized = !in.standardized.empty();
  const bool holdout = !cfg.paths.model.empty();

  ts::FeatureTable table;
  std::vector<ts::PredictionOutcome> outcomes;
  ts::Metrics m;
  std::size_t non_converged = 0;
  double C = cfg.C;
  if (holdout) {
    const auto model = load_model(cfg);
    table = in.table;
    const auto z = standardized_rows(in, model);
    outcomes = predict_all(model, z, cfg.thresholds);
    std::vector<ts::Direction> actual;
    for (int y : table.labels) actual.push_back(ts::label_direction(y));
    m = ts::metrics(directions(outcomes), actual);
    C = model.inverse_reg_C;
  } else {
    if (standardized)
      throw ts::Error(ts::ErrorKind::InvalidConfig, "LOOCV refits the scaler and needs raw features");
    table = cfg.balance ? ts::undersample(in.table, ts::derive_seed(cfg.seed, kStreamBalance)) : in.table;
    ts::CvOptions cv;
    cv.C = cfg.C;
    cv.seed = cfg.seed;
    cv.threads = ts::resolve_threads(cfg.threads);
    cv.thresholds = cfg.thresholds;
    auto r = ts::loocv(table, cv);
    outcomes = std::move(r.outcomes);
    m = r.metrics;
    non_converged = r.non_converged_folds;
  }

  std::vector<ts::PredictorRow> predictors;
  if (standardized)
    predictors.push_back({"logistic_regression", m});
  else
    predictors = ts::compare_predictors(table, directions(outcomes));

  std::optional<ts::MagnitudeSummary> magnitude;
  if (all_deltas_known(table)) magnitude = ts::magnitude_confusion(outcomes, table.deltas, cfg.thresholds);

  json report = provenance(cfg);
  report["input_hash"] = in.hash;
  report["mode"] = holdout ? "holdout" : "loocv";
  report["status"] = non_converged ? "non_convergence" : "ok";
  report["non_converged_folds"] = non_converged;
  report["thresholds"] = thresholds_json(cfg.thresholds);
  report["class_counts"] = {{"input", class_counts(in.table.labels)}, {"evaluated", class_counts(table.labels)}};
  report["balanced"] = !holdout && cfg.balance;
  report["evaluation"] =
      ts::evaluation_report("logistic_regression", m, magnitude ? &magnitude->confusion : nullptr, cfg.seed, C);
  report["predictors"] = predictor_json(predictors);
  report["magnitude"] = magnitude ? ts::magnitude_json(*magnitude) : json(nullptr);
  write_json(cfg.paths.output, report);

  std::ostringstream table_csv, outcomes_csv;
  ts::write_predictor_table(table_csv, predictors);
  ts::write_outcomes_csv(outcomes_csv, table, outcomes, cfg.thresholds);
  write_file(sibling(cfg.paths.output, "predictors.csv"), table_csv.str());
  write_file(sibling(cfg.paths.output, "outcomes.csv"), outcomes_csv.str());
  return non_converged ? kExitNonConvergence : kExitOk;
}

int cmd_predict(const ts::RunConfig& cfg) {
  const auto model = load_model(cfg);
  const Input in = load_input(cfg);
  const auto outcomes = predict_all(model, standardized_rows(in, model), cfg.thresholds);
  std::ostringstream csv;
  ts::write_outcomes_csv(csv, in.table, outcomes, cfg.thresholds);
  write_file(cfg.paths.output, csv.str());

  json manifest = provenance(cfg);
  manifest["artifact"] = "outcomes";
  manifest["artifact_hash"] = content_hash(csv.str());
  manifest["input_hash"] = in.hash;
  manifest["model"] = ts::model_to_json(model);
  manifest["rows"] = outcomes.size();
  write_json(sibling(cfg.paths.output, "manifest.json"), manifest);
  return kExitOk;
}

int cmd_explain(const ts::RunConfig& cfg) {
  const auto model = load_model(cfg);
  const Input in = load_input(cfg);
  const auto Z = standardized_rows(in, model);
  const auto raw = raw_rows(in, model);
  if (cfg.waterfall_sample >= Z.size())
    throw ts::Error(ts::ErrorKind::InvalidConfig, "waterfall_sample " + std::to_string(cfg.waterfall_sample) +
                                                      " is out of range for " + std::to_string(Z.size()) +
                                                      " rows");

  // Standardized training data has mean zero, so "training" needs no data.
  const ts::FeatureArray background =
      cfg.background == "data" ? ts::background_means<ts::kFeatureCount>(Z) : ts::FeatureArray{};
  std::vector<ts::ShapAttribution> attributions;
  attributions.reserve(Z.size());
  for (const auto& z : Z) attributions.push_back(ts::shap_values(model, z, background));

  std::ostringstream scatter;
  ts::write_shap_scatter_csv(scatter, attributions, raw, Z);
  write_file(sibling(cfg.paths.output, "scatter.csv"), scatter.str());

  const auto waterfall = ts::make_waterfall(attributions[cfg.waterfall_sample], raw[cfg.waterfall_sample]);
  json wf = ts::waterfall_json(waterfall);
  wf["sample"] = in.table.ids[cfg.waterfall_sample];
  wf["provenance"] = provenance(cfg);
  write_json(sibling(cfg.paths.output, "waterfall.json"), wf);

  const auto by_prediction = [&](bool decrease) -> json {
    try {
      const auto s = ts::aggregate_shap(
          attributions, in.table.features,
          [decrease](const ts::FeatureVector&, const ts::ShapAttribution& a) {
            return (a.output_probability > 0.5) == decrease;
          },
          decrease ? "predicted_decrease" : "predicted_increase");
      return ts::summary_json(s);
    } catch (const ts::Error& e) {
      if (e.kind() != ts::ErrorKind::EmptyGroup) throw;
      return nullptr;
    }
  };

  json report = provenance(cfg);
  report["input_hash"] = in.hash;
  report["model"] = ts::model_to_json(model);
  report["background"] = cfg.background == "data" ? "input_mean" : "training_mean";
  report["background_values"] = background;
  report["n"] = Z.size();
  report["summary"] = ts::summary_json(ts::aggregate_shap(attributions));
  report["groups"] = {{"predicted_decrease", by_prediction(true)}, {"predicted_increase", by_prediction(false)}};
  if (Z.size() >= 20) {
    const auto importance = ts::permutation_importance<ts::kFeatureCount>(
        model, std::span<const ts::FeatureArray>(Z), in.table.labels, ts::ImportanceMetric::Accuracy,
        cfg.importance_repeats, ts::derive_seed(cfg.seed, kStreamImportance));
    json rows = json::array();
    for (std::size_t j = 0; j < ts::kFeatureCount; ++j)
      rows.push_back({{"feature", ts::kFeatureNames[j]},
                      {"mean_drop", importance[j].mean_drop},
                      {"sd_drop", importance[j].sd_drop}});
    report["permutation_importance"] = {{"metric", "accuracy"}, {"repeats", cfg.importance_repeats},
                                        {"features", rows}};
  } else {
    report["permutation_importance"] = nullptr;
  }
  write_json(cfg.paths.output, report);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Argument plumbing

struct Flags {
  std::string config;
  std::uint64_t seed = 0;
  double C = 0, target = 0, prob_low = 0, prob_high = 0, delta_small = 0;
  std::string input, output, model, background;
  unsigned threads = 0;
  std::size_t participants = 0, trials = 0, sample = 0, repeats = 0;
  bool balance = true;
  bool standardized = false;
  std::vector<double> c_grid;
  std::map<std::string, std::vector<CLI::Option*>> registered;

  bool given(const std::string& key) const {
    const auto it = registered.find(key);
    if (it == registered.end()) return false;
    for (const auto* opt : it->second)
      if (opt->count() > 0) return true;
    return false;
  }
};

template <typename T>
CLI::Option* option(CLI::App* app, Flags& f, const std::string& key, const std::string& names, T& target,
                    const std::string& help) {
  auto* opt = app->add_option(names, target, help);
  f.registered[key].push_back(opt);
  return opt;
}

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--config", f.config, "JSON run configuration; flags override its values");
  option(app, f, "seed", "--seed", f.seed, "Run seed");
  option(app, f, "threads", "--threads", f.threads, "Worker threads (0 = all cores); outputs do not depend on it");
  option(app, f, "output", "-o,--output", f.output, "Primary output file");
}

void add_input(CLI::App* app, Flags& f) { option(app, f, "input", "-i,--input", f.input, "Input CSV"); }

void add_model(CLI::App* app, Flags& f, bool required_help) {
  option(app, f, "model", "-m,--model", f.model,
         required_help ? "Model JSON, or 'pinned' for the built-in reference coefficients"
                       : "Model JSON or 'pinned'; evaluates held-out data instead of LOOCV");
}

void add_modeling(CLI::App* app, Flags& f) {
  option(app, f, "C", "--C", f.C, "Inverse L2 regularization strength");
  option(app, f, "target", "--target", f.target, "Target interval in seconds");
  f.registered["standardized"].push_back(
      app->add_flag("--standardized", f.standardized, "Feature CSV already holds z-scores"));
  f.registered["balance"].push_back(
      app->add_flag("--balance,!--no-balance", f.balance, "Undersample the majority class"));
}

void add_thresholds(CLI::App* app, Flags& f) {
  option(app, f, "prob_low", "--prob-low", f.prob_low, "Probability below which a high increase is predicted");
  option(app, f, "prob_high", "--prob-high", f.prob_high, "Probability above which a high decrease is predicted");
  option(app, f, "delta_small", "--delta-small", f.delta_small, "Seconds of change beyond which a change is high");
}

ts::RunConfig build_config(const Flags& f) {
  ts::RunConfig cfg = f.config.empty() ? ts::RunConfig{} : ts::load_config(f.config);
  if (f.given("seed")) cfg.seed = f.seed;
  if (f.given("threads")) cfg.threads = f.threads;
  if (f.given("input")) cfg.paths.input = f.input;
  if (f.given("output")) cfg.paths.output = f.output;
  if (f.given("model")) cfg.paths.model = f.model;
  if (f.given("C")) cfg.C = f.C;
  if (f.given("target")) cfg.target_interval_s = f.target;
  if (f.given("standardized")) cfg.standardized_input = f.standardized;
  if (f.given("balance")) cfg.balance = f.balance;
  if (f.given("prob_low")) cfg.thresholds.prob_low = f.prob_low;
  if (f.given("prob_high")) cfg.thresholds.prob_high = f.prob_high;
  if (f.given("delta_small")) cfg.thresholds.delta_small = f.delta_small;
  if (f.given("participants")) cfg.n_participants = f.participants;
  if (f.given("trials")) cfg.n_trials = f.trials;
  if (f.given("c_grid")) cfg.c_grid = f.c_grid;
  if (f.given("background")) cfg.background = f.background;
  if (f.given("sample")) cfg.waterfall_sample = f.sample;
  if (f.given("repeats")) cfg.importance_repeats = f.repeats;
  cfg.validate();
  return cfg;
}

int report_error(const ts::Error& e) {
  json j{{"error", ts::to_string(e.kind())}, {"message", e.what()}};
  if (e.index()) j["index"] = *e.index();
  std::cerr << j.dump() << '\n';
  return kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Predict the direction of change in time production between consecutive trials"};
  app.set_version_flag("--version", version_text());
  app.require_subcommand(1);
  Flags f;

  auto* simulate = app.add_subcommand("simulate", "Generate synthetic trials with the attentional-gate simulator");
  add_common(simulate, f);
  option(simulate, f, "participants", "--participants", f.participants, "Number of participants");
  option(simulate, f, "trials", "--trials", f.trials, "Trials per participant");
  option(simulate, f, "target", "--target", f.target, "Target interval in seconds");

  auto* extract = app.add_subcommand("extract", "Turn a trial CSV into the feature CSV");
  add_common(extract, f);
  add_input(extract, f);
  option(extract, f, "target", "--target", f.target, "Target interval in seconds");

  auto* train = app.add_subcommand("train", "Fit the logistic model and write it as JSON");
  add_common(train, f);
  add_input(train, f);
  add_modeling(train, f);
  option(train, f, "c_grid", "--c-grid", f.c_grid, "Candidate C values chosen by repeated stratified 5-fold F1")
      ->delimiter(',');

  auto* evaluate = app.add_subcommand("evaluate", "LOOCV (or held-out) evaluation with baselines");
  add_common(evaluate, f);
  add_input(evaluate, f);
  add_model(evaluate, f, false);
  add_modeling(evaluate, f);
  add_thresholds(evaluate, f);

  auto* predict = app.add_subcommand("predict", "Per-sample probabilities, directions and magnitudes");
  add_common(predict, f);
  add_input(predict, f);
  add_model(predict, f, true);
  add_modeling(predict, f);
  add_thresholds(predict, f);

  auto* explain = app.add_subcommand("explain", "SHAP scatter, waterfall and permutation importance");
  add_common(explain, f);
  add_input(explain, f);
  add_model(explain, f, true);
  add_modeling(explain, f);
  option(explain, f, "background", "--background", f.background, "'training' (default) or 'data'");
  option(explain, f, "sample", "--sample", f.sample, "Row index for the waterfall export");
  option(explain, f, "repeats", "--repeats", f.repeats, "Permutation repeats per feature");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    const ts::RunConfig cfg = build_config(f);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (extract->parsed()) return cmd_extract(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (evaluate->parsed()) return cmd_evaluate(cfg);
    if (predict->parsed()) return cmd_predict(cfg);
    if (explain->parsed()) return cmd_explain(cfg);
  } catch (const ts::Error& e) {
    return report_error(e);
  } catch (const std::exception& e) {
    std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << '\n';
    return 1;
  }
  return kExitInput;
}
