#pragma once

#include <string>
#include <vector>

namespace stagenet::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 2;
inline constexpr int kDataError = 3;
inline constexpr int kNumericError = 4;

/// Runs one subcommand (generate, train, predict, evaluate, subtype,
/// gradcheck) and returns the process exit code. Errors are reported on
/// stderr.
int run(int argc, char** argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace stagenet::cli
