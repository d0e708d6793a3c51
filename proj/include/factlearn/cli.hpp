#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace factlearn {

// Exit codes: 0 ok, 1 runtime failure (non-convergence, verification mismatch),
// 2 bad command line, config or schema, 3 FD violation.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, char** argv);

}  // namespace factlearn
