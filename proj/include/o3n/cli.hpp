#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace o3n {

/// Runs the command line given without the program name. Returns the process exit code;
/// failures print a single `error:` line to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace o3n
