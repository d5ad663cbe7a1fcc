#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace harmscope::cli {

enum ExitCode : int {
    kOk = 0,
    kInputError = 1,  // bad input, failed validation, usage
    kAuditError = 2,  // design, fit, audit or comparison failure
    kInternalError = 3,
};

/// Runs one invocation. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace harmscope::cli
