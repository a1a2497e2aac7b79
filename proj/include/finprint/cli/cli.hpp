#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace finprint::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs the finprint command line on `args` (program name excluded).
///
/// Exit codes: 0 on success, 1 on a domain error (reported as one JSON line
/// on `err`), 2 on a usage error (message and usage text on `err`).
int run(const std::vector<std::string>& args, std::ostream& out,
        std::ostream& err);

}  // namespace finprint::cli
