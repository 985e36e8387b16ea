#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace msdm {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

// Runs one command line (args excludes the program name). Output goes to out,
// diagnostics to err. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace msdm
