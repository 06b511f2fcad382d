#pragma once

#include <stdexcept>
#include <string>

namespace tdclab {

enum class ErrorKind {
  kInvalidArgument,
  kDegenerateInstance,
  kNotErgodic,
  kSingularOperator,
  kNotNegativeDefinite,
  kHorizonExceeded,
  kPlanInfeasible,
  kInsufficientData,
  kNonpositiveError,
  kUnknownPreset,
  kIoError,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries one of the kinds above so the
// CLI can map it onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "InvalidArgument";
    case ErrorKind::kDegenerateInstance: return "DegenerateInstance";
    case ErrorKind::kNotErgodic: return "NotErgodic";
    case ErrorKind::kSingularOperator: return "SingularOperator";
    case ErrorKind::kNotNegativeDefinite: return "NotNegativeDefinite";
    case ErrorKind::kHorizonExceeded: return "HorizonExceeded";
    case ErrorKind::kPlanInfeasible: return "PlanInfeasible";
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kNonpositiveError: return "NonpositiveError";
    case ErrorKind::kUnknownPreset: return "UnknownPreset";
    case ErrorKind::kIoError: return "IoError";
  }
  return "Unknown";
}

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, const std::string& what) {
  if (!cond) fail(ErrorKind::kInvalidArgument, what);
}

}  // namespace tdclab
