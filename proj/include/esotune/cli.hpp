#pragma once

// Command-line front end. run_cli is the whole program minus process exit,
// so tests can drive it in-process.

#include <iosfwd>
#include <string>
#include <vector>

namespace esotune {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitNumerical = 3,
  kExitIo = 4,
};

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace esotune
