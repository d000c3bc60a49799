#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace precedent {

enum class ErrorCode {
  kParse,
  kSchema,
  kDanglingEmbedding,
  kEmptySplit,
  kNoRepresentation,
  kInvalidPattern,
  kScopeUnavailable,
  kMissingPrediction,
  kIndexOutOfRange,
  kLengthMismatch,
  kDimMismatch,
  kNonFiniteLoss,
  kNonFiniteGradient,
  kEmptyTrainSplit,
  kNotConverged,
  kSingularHessian,
  kGuardViolation,
  kShapeMismatch,
  kConstantVector,
  kNoEligiblePairs,
  kSingleClass,
  kDegenerateF1,
  kInfeasibleCitation,
  kInvalidConfig,
  kUnknownFlag,
  kConflictingValues,
  kMissingRequired,
  kMissingArtifact,
  kIo,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "ParseError";
    case ErrorCode::kSchema: return "SchemaError";
    case ErrorCode::kDanglingEmbedding: return "DanglingEmbedding";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kNoRepresentation: return "NoRepresentation";
    case ErrorCode::kInvalidPattern: return "InvalidPattern";
    case ErrorCode::kScopeUnavailable: return "ScopeUnavailable";
    case ErrorCode::kMissingPrediction: return "MissingPrediction";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kLengthMismatch: return "LengthMismatch";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kEmptyTrainSplit: return "EmptyTrainSplit";
    case ErrorCode::kNotConverged: return "NotConverged";
    case ErrorCode::kSingularHessian: return "SingularHessian";
    case ErrorCode::kGuardViolation: return "GuardViolation";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kConstantVector: return "ConstantVector";
    case ErrorCode::kNoEligiblePairs: return "NoEligiblePairs";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kDegenerateF1: return "DegenerateF1";
    case ErrorCode::kInfeasibleCitation: return "InfeasibleCitation";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kUnknownFlag: return "UnknownFlag";
    case ErrorCode::kConflictingValues: return "ConflictingValues";
    case ErrorCode::kMissingRequired: return "MissingRequired";
    case ErrorCode::kMissingArtifact: return "MissingArtifact";
    case ErrorCode::kIo: return "IoError";
  }
  return "Unknown";
}

/// Every failure in the library is reported through this type; `code()`
/// carries the machine-readable category.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace precedent
