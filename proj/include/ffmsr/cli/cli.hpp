#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ffmsr::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Entry point behind the `ffmsr` executable. Metric records go to `out` as
/// one JSON object per line, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ffmsr::cli
