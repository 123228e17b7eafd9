#pragma once

#include <string>
#include <vector>

namespace leafdec {

inline constexpr const char* kToolVersion = "0.1.0";

// Exit codes: 0 success, 1 computation error or failed check, 2 config error.
int run_cli(int argc, char** argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace leafdec
