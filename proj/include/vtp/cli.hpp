#pragma once

#include <ostream>

namespace vtp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Runs one subcommand. Artifacts go under --out together with config.json; nothing is written
/// when the arguments are rejected.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace vtp::cli
