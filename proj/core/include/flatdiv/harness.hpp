#pragma once

#include <string>
#include <vector>

namespace flatdiv {

inline constexpr const char* kToolVersion = "0.1.0";

/// CLI entry point (also used directly by tests).
/// Exit codes: 0 success, 1 validation error, 2 runtime failure,
/// 3 verification failure.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);

}  // namespace flatdiv
