#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace flowcryst {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Quick invariant suites over every module, sized to finish in seconds.
std::vector<CheckResult> run_selfcheck(std::uint64_t seed);

}  // namespace flowcryst
