#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dsvqa {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
/// Bad or unusable data, and failed checks.
inline constexpr int kExitData = 2;

/// Runs the `dsvqa` tool. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsvqa
