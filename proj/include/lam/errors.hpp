// SPDX-License-Identifier: Apache-2.0

#ifndef LAM_ERRORS_HPP_
#define LAM_ERRORS_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace lam {

enum class ErrorCode {
  kShapeError,
  kDegenerateBatch,
  kZeroNorm,
  kFormatError,
  kDuplicateId,
  kNotLadf,
  kTruncatedFile,
  kUnsupportedVersion,
  kEmptySelection,
  kCorpusMismatch,
  kIoError,
  kInvalidK,
  kMissingSeed,
  kUnknownPreset,
  kInvalidAnchor,
  kCacheMismatch,
  kEmptySplit,
  kDiverged,
  kInvalidConfig,
  kInvalidLabel,
  kEmptyEvaluation,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library carries one of the categories above so
// callers (and the CLI) can branch on it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace lam

#endif  // LAM_ERRORS_HPP_
