#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace stabinv::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitNumerical = 3;

// Runs one subcommand. `args` excludes the program name. Returns the process
// exit code: 0 success, 2 usage or configuration error, 3 numerical failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stabinv::cli
