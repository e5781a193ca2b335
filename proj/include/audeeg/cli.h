#pragma once

#include <string>
#include <vector>

namespace audeeg::cli {

enum ExitCode { kOk = 0, kUsage = 1, kRuntime = 2 };

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name. Diagnostics go to stderr.
int run(const std::vector<std::string>& args);

}  // namespace audeeg::cli
