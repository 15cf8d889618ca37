#pragma once

#include <iosfwd>

namespace sgdlab::cli {

/// Entry point of the sgdlab tool. Returns 0 on success, 1 on validation
/// errors (including bad flags) and 2 on runtime failures.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sgdlab::cli
