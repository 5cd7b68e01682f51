#include "segn/error.hpp"

namespace segn {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::BadProbability: return "BadProbability";
    case ErrorKind::FormatError: return "FormatError";
    case ErrorKind::ChecksumError: return "ChecksumError";
    case ErrorKind::AllMissing: return "AllMissing";
    case ErrorKind::OutOfBounds: return "OutOfBounds";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::IncompleteField: return "IncompleteField";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DayMismatch: return "DayMismatch";
    case ErrorKind::EmptySeason: return "EmptySeason";
    case ErrorKind::MissingVariable: return "MissingVariable";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorKind::LayoutMismatch: return "LayoutMismatch";
    case ErrorKind::BadIndex: return "BadIndex";
    case ErrorKind::TooFewFiles: return "TooFewFiles";
    case ErrorKind::BadLabel: return "BadLabel";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::NotInitialized: return "NotInitialized";
    case ErrorKind::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case ErrorKind::EmptyStore: return "EmptyStore";
    case ErrorKind::IoError: return "IoError";
  }
  return "Unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::BadConfig:
    case ErrorKind::BadProbability:
      return 1;
    case ErrorKind::FormatError:
    case ErrorKind::ChecksumError:
      return 2;
    default:
      return 3;
  }
}

}  // namespace segn
