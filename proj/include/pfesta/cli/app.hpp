#pragma once

#include <iosfwd>
#include <string>

namespace pfesta::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitConfig = 2;

inline constexpr const char* kOutputRootEnv = "PFESTA_OUTPUT_ROOT";

// The whole command line: run, costs, attack, gen-world, dump-config.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// $PFESTA_OUTPUT_ROOT if set, else "runs".
std::string output_root();

}  // namespace pfesta::cli
