// SPDX-License-Identifier: Apache-2.0

#include "lam/errors.hpp"

namespace lam {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kDegenerateBatch: return "DegenerateBatch";
    case ErrorCode::kZeroNorm: return "ZeroNorm";
    case ErrorCode::kFormatError: return "FormatError";
    case ErrorCode::kDuplicateId: return "DuplicateId";
    case ErrorCode::kNotLadf: return "NotLadf";
    case ErrorCode::kTruncatedFile: return "TruncatedFile";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kEmptySelection: return "EmptySelection";
    case ErrorCode::kCorpusMismatch: return "CorpusMismatch";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidK: return "InvalidK";
    case ErrorCode::kMissingSeed: return "MissingSeed";
    case ErrorCode::kUnknownPreset: return "UnknownPreset";
    case ErrorCode::kInvalidAnchor: return "InvalidAnchor";
    case ErrorCode::kCacheMismatch: return "CacheMismatch";
    case ErrorCode::kEmptySplit: return "EmptySplit";
    case ErrorCode::kDiverged: return "Diverged";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
    case ErrorCode::kInvalidLabel: return "InvalidLabel";
    case ErrorCode::kEmptyEvaluation: return "EmptyEvaluation";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace lam
