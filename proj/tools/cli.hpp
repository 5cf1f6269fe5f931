#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace regpca::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitNumeric = 1;  // model or numerical failure
inline constexpr int kExitConfig = 2;   // bad configuration, input or I/O

/// Runs one subcommand. `args` excludes the program name. Errors are
/// reported on `err` as a single JSON object {"kind", "message"}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace regpca::cli
