#pragma once

#include <string>
#include <vector>

namespace racseg::cli {

// Exit codes: 0 success, 1 runtime failure, 2 usage/config error.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Dispatches gen-data / train / eval / augment / report. argv excludes the
/// program name.
int run(const std::vector<std::string>& argv);

}  // namespace racseg::cli
