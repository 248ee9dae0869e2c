// Command-line front end: gen, encode, train, eval, ablate, grasp-eval, pick.

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace gskit::cli {

inline constexpr const char* kVersion = "0.3.0";

/// Bad flag values or missing inputs; the message names the offending flag.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Exit codes: 0 success, 1 usage or validation error, 2 runtime failure.
int run(int argc, const char* const* argv);
int run(const std::vector<std::string>& args);  // args[0] is the program name

}  // namespace gskit::cli
