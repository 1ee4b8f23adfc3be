#pragma once
// Command-line front end, factored so tests can drive it in-process.
// run_cli returns the process exit code:
//   0 success, 1 validation or format error, 2 verification failure,
//   3 I/O error.

#include <iosfwd>
#include <string>
#include <vector>

namespace lq {

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace lq
