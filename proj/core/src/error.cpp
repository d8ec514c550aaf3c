#include "lgcalib/error.hpp"

namespace lgcalib {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kAngleNearPi: return "AngleNearPi";
    case ErrorCode::kOutOfRange: return "OutOfRange";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kEmptyTrajectory: return "EmptyTrajectory";
    case ErrorCode::kMissingPerPointTime: return "MissingPerPointTime";
    case ErrorCode::kUnconstrainedVariable: return "UnconstrainedVariable";
    case ErrorCode::kNumericalFailure: return "NumericalFailure";
    case ErrorCode::kNonFiniteObjective: return "NonFiniteObjective";
    case ErrorCode::kInsufficientMotion: return "InsufficientMotion";
    case ErrorCode::kDivergedSolve: return "DivergedSolve";
    case ErrorCode::kNoGroundFound: return "NoGroundFound";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kNoValidPatch: return "NoValidPatch";
    case ErrorCode::kIncompleteStages: return "IncompleteStages";
    case ErrorCode::kNoEvaluablePoints: return "NoEvaluablePoints";
    case ErrorCode::kSingularSigma: return "SingularSigma";
    case ErrorCode::kConfigError: return "ConfigError";
    case ErrorCode::kDatasetError: return "DatasetError";
  }
  return "Unknown";
}

}  // namespace lgcalib
