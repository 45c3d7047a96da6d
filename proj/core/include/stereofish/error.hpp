#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace stereofish {

enum class ErrorCode {
  // geometry
  DegenerateDepth,
  NonConvergence,
  ParallelRays,
  // calibration
  DegenerateConfiguration,
  InsufficientViews,
  IllConditioned,
  ZeroBaseline,
  // pairing
  ZeroVector,
  DimensionMismatch,
  // measurement
  DegenerateMask,
  CollinearMask,
  EmptyBand,
  UnmeasurableFish,
  // tracking
  SingularInnovation,
  OutOfOrderFrame,
  // fusion
  NoMeasurements,
  // synthetic
  TooLarge,
  // generic
  InvalidArgument,
  ConfigError,
  DataError,
};

// Coarse grouping used by the CLI to choose an exit status.
enum class ErrorCategory { Config, Data, Numeric };

std::string_view to_string(ErrorCode code);
ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  ErrorCategory category() const noexcept { return category_of(code_); }

 private:
  ErrorCode code_;
};

}  // namespace stereofish
