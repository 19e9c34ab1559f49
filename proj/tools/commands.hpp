#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dlot::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitDomainError = 1,
    kExitUsage = 2,
};

/// Runs one `dlot` command line. Data goes to `out` (or the -o file),
/// diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dlot::cli
