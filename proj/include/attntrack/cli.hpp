#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace attntrack {

/// Exit codes shared by every subcommand.
enum ExitCode : int { kExitOk = 0, kExitRejected = 1, kExitError = 2 };

/// Environment variable naming the default data directory.
inline constexpr const char* kDataDirEnv = "ATTNTRACK_DATA_DIR";

/// Runs the command line. argv[0] is the program name.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace attntrack
