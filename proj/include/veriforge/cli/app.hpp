#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace veriforge::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

/// Runs the `veriforge` command line. Results go to `out`, diagnostics and the
/// resolved configuration to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace veriforge::cli
