#pragma once

#include <iosfwd>

namespace ogd::cli {

/// Exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

/// Entry point of the `ogd` tool: sample, sweep, gradcheck, relax, report.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ogd::cli
