#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kgx::cli {

// Exit codes: 0 success, 1 operational error, 2 usage error.
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);
int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err);

// Shortest round-trip decimal that always shows a fractional part ("1.0").
std::string format_number(double v);

} // namespace kgx::cli
