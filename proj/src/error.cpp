#include "aimguard/error.hpp"

#include <fmt/format.h>

namespace aimguard {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedRow: return "MalformedRow";
    case ErrorKind::kRangeViolation: return "RangeViolation";
    case ErrorKind::kDomainError: return "DomainError";
    case ErrorKind::kWindowTooShort: return "WindowTooShort";
    case ErrorKind::kEmptySlice: return "EmptySlice";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kKernelLargerThanInput: return "KernelLargerThanInput";
    case ErrorKind::kProbabilityOutOfRange: return "ProbabilityOutOfRange";
    case ErrorKind::kNoForwardPass: return "NoForwardPass";
    case ErrorKind::kSeriesShorterThanWindow: return "SeriesShorterThanWindow";
    case ErrorKind::kLengthMismatch: return "LengthMismatch";
    case ErrorKind::kSingleClass: return "SingleClass";
    case ErrorKind::kNoEliminations: return "NoEliminations";
    case ErrorKind::kEmptyBackground: return "EmptyBackground";
    case ErrorKind::kTooManyFeatures: return "TooManyFeatures";
    case ErrorKind::kIdMismatch: return "IdMismatch";
    case ErrorKind::kNoCheaters: return "NoCheaters";
    case ErrorKind::kMissingHitColumn: return "MissingHitColumn";
    case ErrorKind::kNoShots: return "NoShots";
    case ErrorKind::kNoWindows: return "NoWindows";
    case ErrorKind::kDegeneratePool: return "DegeneratePool";
    case ErrorKind::kNotFound: return "NotFound";
    case ErrorKind::kConflict: return "Conflict";
    case ErrorKind::kValidation: return "ValidationError";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kIo: return "IoError";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(fmt::format("{}: {}", to_string(kind), message)), kind_(kind) {}

MalformedRow::MalformedRow(std::size_t line, const std::string& reason)
    : Error(ErrorKind::kMalformedRow, fmt::format("line {}: {}", line, reason)),
      line_(line),
      reason_(reason) {}

RangeViolation::RangeViolation(std::string field, double value, std::size_t line)
    : Error(ErrorKind::kRangeViolation,
            line == 0 ? fmt::format("{} = {} out of range", field, value)
                      : fmt::format("line {}: {} = {} out of range", line, field, value)),
      field_(std::move(field)),
      value_(value),
      line_(line) {}

}  // namespace aimguard
