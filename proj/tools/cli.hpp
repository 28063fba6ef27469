#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dnp::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kUsage = 2,
  kDiverged = 3,
};

// Runs one command line (args excludes the program name) and returns the
// process exit code. Progress goes to out, diagnostics to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dnp::cli
