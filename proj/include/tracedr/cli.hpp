#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace tracedr {

/// Entry point of the `tracedr` tool. Returns the process exit code:
/// 0 on success, 1 on runtime failure (including a failed benchmark audit),
/// 2 on usage errors.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tracedr
