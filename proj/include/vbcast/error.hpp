#pragma once

#include <stdexcept>
#include <string>

namespace vbcast {

enum class ErrorKind {
  Config,          // invalid parameter combination
  Scenario,        // topology cannot be built
  Parse,           // malformed input file
  Validation,      // well-formed input violating an invariant
  UnsupportedMode, // uncalibrated PHY mode
  Degenerate,      // synchronization point, zero load and similar singular inputs
  Infeasible,      // no admissible fixed point
  Extrapolation,   // provider queried outside its grid hull
  ModelInconsistency,
  InsufficientSamples,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::Config: return "config";
    case ErrorKind::Scenario: return "scenario";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Validation: return "validation";
    case ErrorKind::UnsupportedMode: return "unsupported-mode";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Infeasible: return "infeasible";
    case ErrorKind::Extrapolation: return "extrapolation";
    case ErrorKind::ModelInconsistency: return "model-inconsistency";
    case ErrorKind::InsufficientSamples: return "insufficient-samples";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace vbcast
