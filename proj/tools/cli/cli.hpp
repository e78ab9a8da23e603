#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace cbnn::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,     ///< bad arguments or configuration
    kDataError = 2, ///< unreadable data, broken run directory, degenerate diagnostics
    kDiverged = 3,  ///< the learner produced non-finite values
};

/// Environment variable naming the directory under which `train` creates
/// run directories when no explicit output is given.
inline constexpr const char* kOutputRootEnv = "CBNN_OUTPUT_ROOT";

/// Entry point for `cbnn <command> ...`; `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cbnn::cli
