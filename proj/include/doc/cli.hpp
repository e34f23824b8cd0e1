#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace doc::cli {

// Process exit codes.
enum ExitCode : int {
  kSuccess = 0,
  kUsage = 1,
  kDataError = 2,
  kNumericalFailure = 3,
};

// Runs the `doc` command line (args excludes the program name). Standard
// input is only read by `predict --input -`.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace doc::cli
