#pragma once

#include <iosfwd>

namespace crossgame {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitInvariant = 3;

/// Entry point of the `crossgame` tool. Verbs: run, sweep, compare-levels, spne-check, plot.
int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace crossgame
