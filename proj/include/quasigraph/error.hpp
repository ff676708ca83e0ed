#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace quasigraph {

enum class ErrorCode {
  OutOfImage,
  Inadmissible,
  InvalidScale,
  OrbitEscapes,
  Overflow,
  BudgetExceeded,
  HitsNeutralSet,
  NonConvergent,
  BadCertificate,
  NoBracket,
  InsufficientData,
  ScaleTooFine,
  InvalidArgument,
  ConfigError,
  ParseError,
};

inline std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::OutOfImage: return "OutOfImage";
    case ErrorCode::Inadmissible: return "Inadmissible";
    case ErrorCode::InvalidScale: return "InvalidScale";
    case ErrorCode::OrbitEscapes: return "OrbitEscapes";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::HitsNeutralSet: return "HitsNeutralSet";
    case ErrorCode::NonConvergent: return "NonConvergent";
    case ErrorCode::BadCertificate: return "BadCertificate";
    case ErrorCode::NoBracket: return "NoBracket";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::ScaleTooFine: return "ScaleTooFine";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI) can branch on the kind of failure.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace quasigraph
