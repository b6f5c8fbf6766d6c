#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace scmkit::cli {

/// Exit codes: 0 success, 1 configuration or I/O error, 2 data error,
/// 3 numerical failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace scmkit::cli
