#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace eyewear {

enum class ErrorCode {
  EmptyInput,
  DimensionMismatch,
  RankDeficient,
  UnknownStyle,
  AxisOutOfRange,
  UninitializedB,
  NoTemplates,
  MalformedTemplate,
  DegenerateLandmarks,
  BackendFailure,
  FitDiverged,
  NoGlassesFound,
  EmptyCorpus,
  BadMagic,
  VersionMismatch,
  ChecksumFailure,
  DimInconsistency,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the taxonomy codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

/// Re-raises `e` with a stage label prepended, keeping the original code.
[[noreturn]] inline void rethrow_with_stage(const Error& e, std::string_view stage) {
  throw Error(e.code(), std::string(stage) + " stage: " + e.message());
}

}  // namespace eyewear
