#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace aimguard {

enum class ErrorKind {
  kMalformedRow,
  kRangeViolation,
  kDomainError,
  kWindowTooShort,
  kEmptySlice,
  kShapeMismatch,
  kKernelLargerThanInput,
  kProbabilityOutOfRange,
  kNoForwardPass,
  kSeriesShorterThanWindow,
  kLengthMismatch,
  kSingleClass,
  kNoEliminations,
  kEmptyBackground,
  kTooManyFeatures,
  kIdMismatch,
  kNoCheaters,
  kMissingHitColumn,
  kNoShots,
  kNoWindows,
  kDegeneratePool,
  kNotFound,
  kConflict,
  kValidation,
  kInvalidConfig,
  kIo,
};

const char* to_string(ErrorKind kind);

// Base exception for every failure raised by the library. `kind()` is the
// stable, machine-checkable part; the message carries context for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class MalformedRow : public Error {
 public:
  MalformedRow(std::size_t line, const std::string& reason);

  std::size_t line() const noexcept { return line_; }
  const std::string& reason() const noexcept { return reason_; }

 private:
  std::size_t line_;
  std::string reason_;
};

class RangeViolation : public Error {
 public:
  RangeViolation(std::string field, double value, std::size_t line = 0);

  const std::string& field() const noexcept { return field_; }
  double value() const noexcept { return value_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string field_;
  double value_;
  std::size_t line_;
};

}  // namespace aimguard
