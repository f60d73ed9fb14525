#pragma once

#include <iosfwd>

namespace fieldev {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;
inline constexpr int kExitLifecycle = 4;

// Entry point of the `fieldev` executable.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fieldev
