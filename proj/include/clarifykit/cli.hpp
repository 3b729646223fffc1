#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace clarifykit::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// `args` excludes the program name. `in` feeds interactive subcommands.
int dispatch(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

int dispatch(int argc, char** argv);

}  // namespace clarifykit::cli
