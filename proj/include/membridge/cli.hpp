#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace membridge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

// Runs one subcommand. args excludes the program name. Results go to `out`
// (or the --out path), diagnostics and the resolved configuration to `err`.
int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
             std::ostream& err);

}  // namespace membridge
