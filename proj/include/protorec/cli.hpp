#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace protorec {

inline constexpr std::string_view kToolkitVersion = "0.1.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumerical = 3;

// Entry point for `protorec <subcommand> ...`. args[0] is the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protorec
