#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "timeshift/error.hpp"
#include "timeshift/text.hpp"

namespace timeshift {

// Ordinal, codes fixed to 0/1/2.
enum class EngagementLevel : int { Low = 0, Medium = 1, High = 2 };

inline constexpr std::array<EngagementLevel, 3> kEngagementLevels = {
    EngagementLevel::Low, EngagementLevel::Medium, EngagementLevel::High};

constexpr int code(EngagementLevel level) noexcept { return static_cast<int>(level); }

constexpr std::string_view to_string(EngagementLevel level) noexcept {
  switch (level) {
    case EngagementLevel::Low: return "low";
    case EngagementLevel::Medium: return "medium";
    case EngagementLevel::High: return "high";
  }
  return "?";
}

inline std::optional<EngagementLevel> engagement_from_code(long long c) {
  if (c < 0 || c > 2) return std::nullopt;
  return static_cast<EngagementLevel>(c);
}

// Accepts low/medium/high (any case) or 0/1/2.
inline std::optional<EngagementLevel> parse_engagement(std::string_view s) {
  const std::string v = text::lower(text::trim(s));
  if (v == "low") return EngagementLevel::Low;
  if (v == "medium") return EngagementLevel::Medium;
  if (v == "high") return EngagementLevel::High;
  if (auto c = text::parse_int(v)) return engagement_from_code(*c);
  return std::nullopt;
}

enum class Direction { Increase, Decrease };

constexpr std::string_view to_string(Direction d) noexcept {
  return d == Direction::Decrease ? "decrease" : "increase";
}

// Strictly-less-than is a decrease; a zero change counts as Increase.
constexpr Direction direction_of_change(double delta_t_s) noexcept {
  return delta_t_s < 0.0 ? Direction::Decrease : Direction::Increase;
}

enum class MagnitudeLevel : int { HighIncrease = 0, SmallChange = 1, HighDecrease = 2 };

inline constexpr std::array<MagnitudeLevel, 3> kMagnitudeLevels = {
    MagnitudeLevel::HighIncrease, MagnitudeLevel::SmallChange, MagnitudeLevel::HighDecrease};

constexpr std::string_view to_string(MagnitudeLevel m) noexcept {
  switch (m) {
    case MagnitudeLevel::HighIncrease: return "high_increase";
    case MagnitudeLevel::SmallChange: return "small_change";
    case MagnitudeLevel::HighDecrease: return "high_decrease";
  }
  return "?";
}

enum class Provenance { Human, Synthetic };

constexpr std::string_view to_string(Provenance p) noexcept {
  return p == Provenance::Human ? "human" : "synthetic";
}

struct TrialRecord {
  std::string participant_id;
  int trial_index = 1;
  EngagementLevel engagement = EngagementLevel::Low;
  double produced_time_s = 30.0;
  bool reported_lower_than_30 = false;
  bool reported_high_engagement = false;
  std::optional<double> nontiming_task_error;

  friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

struct SamplePair {
  TrialRecord prev;
  TrialRecord next;
  double delta_t_s = 0.0;
  Direction label = Direction::Increase;

  friend bool operator==(const SamplePair&, const SamplePair&) = default;
};

struct Dataset {
  std::vector<SamplePair> samples;
  Provenance provenance = Provenance::Human;
  std::optional<std::uint64_t> seed;

  std::size_t count(Direction d) const {
    return static_cast<std::size_t>(std::count_if(
        samples.begin(), samples.end(), [d](const SamplePair& s) { return s.label == d; }));
  }
};

inline constexpr std::array<std::string_view, 7> kTrialColumns = {
    "participant_id",         "trial_index",
    "engagement_level",       "produced_time_s",
    "reported_lower_than_30", "reported_high_engagement",
    "nontiming_task_error"};

namespace detail {

inline bool next_data_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!text::trim(line).empty()) return true;
  }
  return false;
}

// Maps required column names to their position in a header; unknown columns
// are reported through `warnings` and otherwise ignored.
template <std::size_t N>
std::array<std::size_t, N> resolve_columns(const std::vector<std::string>& header,
                                           const std::array<std::string_view, N>& required,
                                           std::span<const std::string_view> optional_names,
                                           std::vector<std::string>* warnings) {
  std::array<std::size_t, N> positions{};
  for (std::size_t c = 0; c < N; ++c) {
    auto it = std::find_if(header.begin(), header.end(), [&](const std::string& h) {
      return text::trim(h) == required[c];
    });
    if (it == header.end()) throw Error(ErrorKind::MissingColumn, std::string(required[c]));
    positions[c] = static_cast<std::size_t>(it - header.begin());
  }
  if (warnings) {
    for (const auto& h : header) {
      const auto name = text::trim(h);
      const bool known =
          std::find(required.begin(), required.end(), name) != required.end() ||
          std::find(optional_names.begin(), optional_names.end(), name) != optional_names.end();
      if (!known) warnings->push_back("ignoring unknown column '" + std::string(name) + "'");
    }
  }
  return positions;
}

}  // namespace detail

/// Reads trials in the canonical CSV schema. Column order is free, names are
/// exact, extra columns are skipped with a warning.
inline std::vector<TrialRecord> parse_trials(std::istream& in,
                                             std::vector<std::string>* warnings = nullptr) {
  std::string line;
  std::size_t line_no = 0;
  if (!detail::next_data_line(in, line, line_no)) throw Error(ErrorKind::EmptyFile, "no header");
  const auto header = text::split_csv_line(line);
  const auto col = detail::resolve_columns(header, kTrialColumns, {}, warnings);

  std::vector<TrialRecord> trials;
  while (detail::next_data_line(in, line, line_no)) {
    const auto fields = text::split_csv_line(line);
    const auto bad = [&](const std::string& why) {
      return Error(ErrorKind::MalformedRow, "line " + std::to_string(line_no) + ": " + why,
                   line_no);
    };
    if (fields.size() < header.size()) throw bad("expected " + std::to_string(header.size()) +
                                                 " fields, got " + std::to_string(fields.size()));
    TrialRecord r;
    r.participant_id = std::string(text::trim(fields[col[0]]));
    if (r.participant_id.empty()) throw bad("empty participant_id");

    const auto index = text::parse_int(fields[col[1]]);
    if (!index || *index < 1 || *index > 1'000'000'000) throw bad("trial_index must be an integer >= 1");
    r.trial_index = static_cast<int>(*index);

    const auto engagement = parse_engagement(fields[col[2]]);
    if (!engagement) throw bad("engagement_level must be low/medium/high or 0/1/2");
    r.engagement = *engagement;

    const auto produced = text::parse_real(fields[col[3]]);
    if (!produced || !std::isfinite(*produced) || *produced <= 0.0)
      throw bad("produced_time_s must be finite and > 0");
    r.produced_time_s = *produced;

    const auto lower = text::parse_bool(fields[col[4]]);
    const auto high = text::parse_bool(fields[col[5]]);
    if (!lower || !high) throw bad("boolean fields must be true/false");
    r.reported_lower_than_30 = *lower;
    r.reported_high_engagement = *high;

    if (!text::trim(fields[col[6]]).empty()) {
      const auto err = text::parse_real(fields[col[6]]);
      if (!err || !std::isfinite(*err) || *err < 0.0) throw bad("nontiming_task_error must be >= 0");
      r.nontiming_task_error = *err;
    }
    trials.push_back(std::move(r));
  }
  if (trials.empty()) throw Error(ErrorKind::EmptyFile, "header only");
  return trials;
}

inline std::vector<TrialRecord> load_trials(const std::string& path,
                                            std::vector<std::string>* warnings = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  return parse_trials(in, warnings);
}

inline void write_trials(std::ostream& out, std::span<const TrialRecord> trials) {
  for (std::size_t c = 0; c < kTrialColumns.size(); ++c)
    out << (c ? "," : "") << kTrialColumns[c];
  out << '\n';
  for (const auto& t : trials) {
    out << text::csv_field(t.participant_id) << ',' << t.trial_index << ','
        << to_string(t.engagement) << ',' << text::format_real(t.produced_time_s) << ','
        << (t.reported_lower_than_30 ? "true" : "false") << ','
        << (t.reported_high_engagement ? "true" : "false") << ',';
    if (t.nontiming_task_error) out << text::format_real(*t.nontiming_task_error);
    out << '\n';
  }
}

inline SamplePair make_pair(const TrialRecord& prev, const TrialRecord& next) {
  const double delta = next.produced_time_s - prev.produced_time_s;
  return SamplePair{prev, next, delta, direction_of_change(delta)};
}

/// Pairs each trial with its immediate successor. Participants are emitted in
/// order of first appearance; trials within a participant by trial_index.
/// A gap in trial indices breaks the chain (no pair spans the gap).
inline std::vector<SamplePair> pair_consecutive(std::span<const TrialRecord> trials) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<const TrialRecord*>> groups;
  for (const auto& t : trials) {
    auto [it, inserted] = groups.try_emplace(t.participant_id);
    if (inserted) order.push_back(t.participant_id);
    it->second.push_back(&t);
  }
  std::vector<SamplePair> pairs;
  for (const auto& id : order) {
    auto& group = groups[id];
    std::stable_sort(group.begin(), group.end(), [](const TrialRecord* a, const TrialRecord* b) {
      return a->trial_index < b->trial_index;
    });
    for (std::size_t i = 1; i < group.size(); ++i) {
      if (group[i]->trial_index == group[i - 1]->trial_index)
        throw Error(ErrorKind::DuplicateTrialIndex,
                    "participant '" + id + "' repeats trial " +
                        std::to_string(group[i]->trial_index),
                    static_cast<std::size_t>(group[i]->trial_index));
      if (group[i]->trial_index == group[i - 1]->trial_index + 1)
        pairs.push_back(make_pair(*group[i - 1], *group[i]));
    }
  }
  return pairs;
}

inline Dataset make_dataset(std::span<const TrialRecord> trials, Provenance provenance,
                            std::optional<std::uint64_t> seed = std::nullopt) {
  return Dataset{pair_consecutive(trials), provenance, seed};
}

}  // namespace timeshift
