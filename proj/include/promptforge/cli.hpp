#pragma once

#include <string>
#include <vector>

namespace pf::cli {

// Entry point behind the promptforge binary. Returns the process exit code:
// 0 success, 1 runtime failure, 2 unknown command or invalid config.
int run_command(const std::vector<std::string>& args);

}  // namespace pf::cli
