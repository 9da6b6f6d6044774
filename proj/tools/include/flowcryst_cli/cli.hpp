#pragma once

#include <iosfwd>

namespace flowcryst::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitUsage = 64;

/// Entry point of the `flowcryst` command. Diagnostics go to `err`,
/// summaries to `out`.
int run(int argc, char** argv, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace flowcryst::cli
