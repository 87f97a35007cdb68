#pragma once

#include <iosfwd>

namespace epal::cli {

/// Exit codes: 0 success, 1 runtime failure (missing or invalid campaign, failed check),
/// 2 usage error (unknown subcommand, bad flag).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace epal::cli
