#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace spsr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitConfig = 3;

// Parses argv (argv[0] is the program name) and dispatches to a subcommand.
int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace spsr::cli
