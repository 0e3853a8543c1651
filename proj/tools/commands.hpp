#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace les::cli {

/// Runs the command line `args` (without the program name). Returns the exit
/// code: 0 on success, 1 for bad input or a failed run, 2 for internal errors.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

} // namespace les::cli
