#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace segn {

/// Failure categories raised across the pipeline. The CLI maps each kind to
/// an exit code (see exit_code_for).
enum class ErrorKind {
  // usage / configuration
  BadConfig,
  BadProbability,
  // on-disk format
  FormatError,
  ChecksumError,
  // preconditions
  AllMissing,
  OutOfBounds,
  OutOfRange,
  IncompleteField,
  ShapeMismatch,
  DayMismatch,
  EmptySeason,
  MissingVariable,
  InsufficientHistory,
  EmptyTrainingSet,
  LayoutMismatch,
  BadIndex,
  TooFewFiles,
  BadLabel,
  EmptyClass,
  NotInitialized,
  SingleClassTrainingSet,
  EmptyStore,
  IoError,
};

std::string_view error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// CLI exit code: 1 usage, 2 format, 3 precondition.
int exit_code_for(ErrorKind kind);

}  // namespace segn
