#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace toposeg::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitCheckFailed = 1,
  kExitUsage = 2,
  kExitIo = 3,
};

/// Environment variable that overrides the worker thread count.
inline constexpr const char* kThreadsEnv = "TOPOSEG_THREADS";

/// Runs the tool on `args` (without the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace toposeg::cli
