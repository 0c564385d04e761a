#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qcpd {

enum class ErrorCode {
  kInvalidArgument,
  kInsufficientData,
  kNonFiniteObjective,
  kAllZeroMatrix,
  kDimensionMismatch,
  kNoObservations,
  kMissingCriticalValue,
  kIoError,
  kFormatError,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Library-wide exception. Every failure surfaced by qcpd carries a code so
/// callers (the CLI in particular) can map it to a stable exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) {
  throw Error(code, what);
}

}  // namespace qcpd
