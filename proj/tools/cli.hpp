#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace spwood::cli {

/// Exit statuses shared by every command.
enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kInvalidInput = 2,
    kDegenerate = 3,
};

/// Runs the command line `args` (args[0] is the program name). Reports go
/// to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spwood::cli
