#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tsvat {

enum class ErrorCode {
  InvalidSeries,
  ParseError,
  WindowTooLong,
  NoDominantPeriod,
  InvalidConfig,
  AnomalyOutOfRange,
  OverlappingAnomalies,
  WindowShorterThanPatch,
  ShapeMismatch,
  NoMaskedPatches,
  NotEnoughWindows,
  RegionTooShort,
  DivergedLoss,
  ZeroBaseline,
  DegenerateInput,
  PerplexityInfeasible,
  InsufficientRows,
  DegenerateTarget,
  IndexOutOfRange,
  NotFound,
  ChecksumMismatch,
  ValidationError,
  IoError,
};

std::string_view to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so callers
// (CLI exit codes, HTTP status mapping, tests) can branch without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

inline void require(bool condition, ErrorCode code, const std::string& message) {
  if (!condition) fail(code, message);
}

}  // namespace tsvat
