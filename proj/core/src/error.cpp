#include "stereofish/error.hpp"

namespace stereofish {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DegenerateDepth: return "DegenerateDepth";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::ParallelRays: return "ParallelRays";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::InsufficientViews: return "InsufficientViews";
    case ErrorCode::IllConditioned: return "IllConditioned";
    case ErrorCode::ZeroBaseline: return "ZeroBaseline";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DegenerateMask: return "DegenerateMask";
    case ErrorCode::CollinearMask: return "CollinearMask";
    case ErrorCode::EmptyBand: return "EmptyBand";
    case ErrorCode::UnmeasurableFish: return "UnmeasurableFish";
    case ErrorCode::SingularInnovation: return "SingularInnovation";
    case ErrorCode::OutOfOrderFrame: return "OutOfOrderFrame";
    case ErrorCode::NoMeasurements: return "NoMeasurements";
    case ErrorCode::TooLarge: return "TooLarge";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::DataError: return "DataError";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidArgument:
      return ErrorCategory::Config;
    case ErrorCode::DataError:
    case ErrorCode::OutOfOrderFrame:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::TooLarge:
      return ErrorCategory::Data;
    default:
      return ErrorCategory::Numeric;
  }
}

}  // namespace stereofish
