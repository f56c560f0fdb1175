#pragma once

#include <string>
#include <vector>

namespace dsrl {

// Command-line driver: gen | train | eval | selftest. Returns the process
// exit code: 0 success, 1 validation error, 2 runtime error, 3 selftest
// failure.
int run_cli(const std::vector<std::string>& args);

}  // namespace dsrl
