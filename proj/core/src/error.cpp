#include "flowcryst/error.hpp"

namespace flowcryst {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::Dimension: return "dimension";
    case ErrorCode::Domain: return "domain";
    case ErrorCode::DegenerateCell: return "degenerate-cell";
    case ErrorCode::NiggliViolation: return "niggli-violation";
    case ErrorCode::Range: return "range";
    case ErrorCode::Data: return "data";
    case ErrorCode::InsufficientData: return "insufficient-data";
    case ErrorCode::ScheduleDomain: return "schedule-domain";
    case ErrorCode::Numeric: return "numeric";
    case ErrorCode::Configuration: return "configuration";
    case ErrorCode::Capacity: return "capacity";
    case ErrorCode::Pairing: return "pairing";
    case ErrorCode::Integration: return "integration";
    case ErrorCode::Io: return "io";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + " error: " + what), code_(code) {}

void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace flowcryst
