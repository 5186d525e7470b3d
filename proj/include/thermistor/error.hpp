#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace thermistor {

enum class Errc {
  InvalidArgument,
  InvalidGrid,
  NonfiniteValue,
  BallOutOfDomain,
  RadiusBelowResolution,
  EmptyInput,
  SingularFlux,
  NonfiniteEnergy,
  MaxIterationsExceeded,
  TooCloseToBoundary,
  TraceTooLarge,
  ResolutionExhausted,
  OuterNotConverged,
  ConfigError,
  IoError,
};

constexpr std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::InvalidGrid: return "InvalidGrid";
    case Errc::NonfiniteValue: return "NonfiniteValue";
    case Errc::BallOutOfDomain: return "BallOutOfDomain";
    case Errc::RadiusBelowResolution: return "RadiusBelowResolution";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::SingularFlux: return "SingularFlux";
    case Errc::NonfiniteEnergy: return "NonfiniteEnergy";
    case Errc::MaxIterationsExceeded: return "MaxIterationsExceeded";
    case Errc::TooCloseToBoundary: return "TooCloseToBoundary";
    case Errc::TraceTooLarge: return "TraceTooLarge";
    case Errc::ResolutionExhausted: return "ResolutionExhausted";
    case Errc::OuterNotConverged: return "OuterNotConverged";
    case Errc::ConfigError: return "ConfigError";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

/// Exception carrying a machine-readable error kind.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace thermistor
