#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace timeshift {

enum class ErrorKind {
  MalformedRow,
  MissingColumn,
  EmptyFile,
  DuplicateTrialIndex,
  NonPositiveTime,
  ConstantColumn,
  TooFewSamples,
  MissingBaseline,
  SingleClass,
  FoldSingleClass,
  LengthMismatch,
  EmptyGroup,
  DependencyViolation,
  InvalidParams,
  InvalidConfig,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::DuplicateTrialIndex: return "DuplicateTrialIndex";
    case ErrorKind::NonPositiveTime: return "NonPositiveTime";
    case ErrorKind::ConstantColumn: return "ConstantColumn";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::MissingBaseline: return "MissingBaseline";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::FoldSingleClass: return "FoldSingleClass";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyGroup: return "EmptyGroup";
    case ErrorKind::DependencyViolation: return "DependencyViolation";
    case ErrorKind::InvalidParams: return "InvalidParams";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

// Every library failure is reported through this one exception type. `index`
// carries the line number, column index or fold index when one applies.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message,
        std::optional<std::size_t> index = std::nullopt)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        index_(index) {}

  ErrorKind kind() const noexcept { return kind_; }
  std::optional<std::size_t> index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  std::optional<std::size_t> index_;
};

}  // namespace timeshift
