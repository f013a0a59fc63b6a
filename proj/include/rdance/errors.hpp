#pragma once

#include <stdexcept>
#include <string>

namespace rdance {

enum class ErrorCode {
  kBadMagic,
  kDimensionMismatch,
  kTruncatedFile,
  kIoFailure,
  kUnsupportedSkeleton,
  kTooShort,
  kBadStyle,
  kShapeMismatch,
  kNonFiniteValue,
  kNonFiniteGrad,
  kNonFiniteActivation,
  kInsufficientHistory,
  kNoEligibleClip,
  kBadLength,
  kTooFew,
  kTooFewClips,
  kEmptyBeatSet,
  kDegenerateCovariance,
  kBadConfig,
  kInvalidRotation,
};

inline const char* error_code_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kUnsupportedSkeleton: return "UnsupportedSkeleton";
    case ErrorCode::kTooShort: return "TooShort";
    case ErrorCode::kBadStyle: return "BadStyle";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kNonFiniteGrad: return "NonFiniteGrad";
    case ErrorCode::kNonFiniteActivation: return "NonFiniteActivation";
    case ErrorCode::kInsufficientHistory: return "InsufficientHistory";
    case ErrorCode::kNoEligibleClip: return "NoEligibleClip";
    case ErrorCode::kBadLength: return "BadLength";
    case ErrorCode::kTooFew: return "TooFew";
    case ErrorCode::kTooFewClips: return "TooFewClips";
    case ErrorCode::kEmptyBeatSet: return "EmptyBeatSet";
    case ErrorCode::kDegenerateCovariance: return "DegenerateCovariance";
    case ErrorCode::kBadConfig: return "BadConfig";
    case ErrorCode::kInvalidRotation: return "InvalidRotation";
  }
  return "Unknown";
}

/// Library-wide error. Carries a machine-readable code so callers (and the
/// CLI) can map failures to exit categories without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
        code_(code) {}

  ErrorCode code() const { return code_; }

  /// true for malformed/unusable input data, false for numeric failures.
  bool is_data_error() const {
    switch (code_) {
      case ErrorCode::kNonFiniteValue:
      case ErrorCode::kNonFiniteGrad:
      case ErrorCode::kNonFiniteActivation:
      case ErrorCode::kDegenerateCovariance:
        return false;
      default:
        return true;
    }
  }

 private:
  ErrorCode code_;
};

}  // namespace rdance
