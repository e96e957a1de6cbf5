#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace dsam::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingFile = 3;

// Runs one command line (args[0] is the program name). Errors are reported as
// a single line on `err` and mapped to the exit codes above.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsam::cli
