#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace qsdctl::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_error = 1;
inline constexpr int exit_diagnostic = 2;

/// Runs one qsdctl invocation. `args` excludes the program name. Output
/// files go to --out (default: the working directory) together with
/// manifest.json; a one-line summary goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace qsdctl::cli
