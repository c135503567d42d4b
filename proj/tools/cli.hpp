#pragma once

#include <ostream>

namespace lcz::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the `lczlab` executable: generate | train | ablate | report.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lcz::cli
