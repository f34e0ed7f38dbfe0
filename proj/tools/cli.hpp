#pragma once

#include <ostream>

namespace fairhyp::cli {

/// Runs one command line. Returns 0 on success, 2 on a usage error and 1 on
/// any runtime failure; messages go to `err`, results to `out`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fairhyp::cli
