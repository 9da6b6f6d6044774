#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace flowcryst {

enum class ErrorCode {
  Dimension,
  Domain,
  DegenerateCell,
  NiggliViolation,
  Range,
  Data,
  InsufficientData,
  ScheduleDomain,
  Numeric,
  Configuration,
  Capacity,
  Pairing,
  Integration,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Single exception type for the library; `code()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& what);

}  // namespace flowcryst
