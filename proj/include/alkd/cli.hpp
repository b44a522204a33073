#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace alkd {

/// Exit codes of the command-line entry point.
enum ExitCode : int {
    kExitOk = 0,
    kExitUsage = 1,
    kExitData = 2,
    kExitDivergence = 3,
};

/// Runs one subcommand. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace alkd
