#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace meal::cli {

/// Runs one command line (without the program name). Returns the process exit
/// code; failures print a single diagnostic line to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace meal::cli
