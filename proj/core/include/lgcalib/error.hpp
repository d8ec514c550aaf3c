#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lgcalib {

enum class ErrorCode {
  kAngleNearPi,
  kOutOfRange,
  kParseError,
  kIoError,
  kTooFewPoints,
  kEmptyTrajectory,
  kMissingPerPointTime,
  kUnconstrainedVariable,
  kNumericalFailure,
  kNonFiniteObjective,
  kInsufficientMotion,
  kDivergedSolve,
  kNoGroundFound,
  kDegenerateGeometry,
  kNoValidPatch,
  kIncompleteStages,
  kNoEvaluablePoints,
  kSingularSigma,
  kConfigError,
  kDatasetError,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library; the code identifies the failure
// class so callers (the CLI in particular) can map it to exit statuses.
class CalibError : public std::runtime_error {
 public:
  CalibError(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        detail_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// Message without the code prefix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

}  // namespace lgcalib
