#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace vareid {

enum class ErrorKind {
  ZeroVector,
  NotUnitNorm,
  IndexOutOfRange,
  InvalidSmoothing,
  InvalidDistribution,
  LengthMismatch,
  ShapeMismatch,
  InvalidConfig,
  InvalidRate,
  TooFewIdentities,
  NoValidPositive,
  NonFiniteLoss,
  Io,
  ParseError,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::NotUnitNorm: return "NotUnitNorm";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::InvalidSmoothing: return "InvalidSmoothing";
    case ErrorKind::InvalidDistribution: return "InvalidDistribution";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::InvalidRate: return "InvalidRate";
    case ErrorKind::TooFewIdentities: return "TooFewIdentities";
    case ErrorKind::NoValidPositive: return "NoValidPositive";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::Io: return "Io";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Single exception type for the library; `kind()` tells callers what failed.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace vareid
