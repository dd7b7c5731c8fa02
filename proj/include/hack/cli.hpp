#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hack {

inline constexpr const char* kVersion = "1.0.0";

/// Runs one subcommand. `args` excludes the program name. Returns 0 on
/// success, 1 on a domain error and 2 on a usage error (synopsis printed).
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hack
