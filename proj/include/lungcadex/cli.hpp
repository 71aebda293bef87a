#pragma once

#include <exception>
#include <string>
#include <vector>

namespace lungcadex::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitRuntime = 1,
  kExitUsage = 2,
  kExitConfig = 3,
  kExitData = 4,
  kExitTraining = 5,
  kExitUndefinedMetric = 6,
};

/// Maps a library exception onto the exit code reported by the command line.
int exit_code_for(const std::exception& error);

/// Entry point; argv[0] is the program name.
int run(int argc, const char* const* argv);
/// Same, with the arguments after the program name.
int run(const std::vector<std::string>& args);

}  // namespace lungcadex::cli
