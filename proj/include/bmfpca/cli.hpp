#pragma once

#include <string>
#include <vector>

namespace bmfpca::cli {

// Exit-code contract shared by every subcommand.
enum ExitCode : int {
  kOk = 0,
  kInvalid = 1,       // validation, configuration or usage error
  kNumerical = 2,     // numerical failure inside a fit
  kNotConverged = 3,  // ELBO did not reach the tolerance within max_iter
};

// Entry point of the bmfpca executable: fit, select, predict, simulate, bench.
int run(int argc, const char* const* argv);
// Same, with the arguments after the program name.
int run(const std::vector<std::string>& args);

}  // namespace bmfpca::cli
