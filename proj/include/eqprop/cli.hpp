#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace eqprop {

inline constexpr int kExitOk = 0;
inline constexpr int kExitThreshold = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitDivergence = 3;

/// Entry point of the `eqprop` command; `args` excludes the program name.
/// The last line written to `out` is a one-line JSON record of the run.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eqprop
