#pragma once

#include <iosfwd>

namespace fiadla {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitTaskFailure = 3;

// Subcommands: campaign, drive, reliability, array-sim, inject, classifier,
// export-network, report.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fiadla
