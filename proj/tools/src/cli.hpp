#pragma once

#include <ostream>

namespace smokenet::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;     // bad flags, failed validation
inline constexpr int kData = 2;      // unreadable or malformed input
inline constexpr int kContract = 3;  // shape mismatch, failed precondition

// Runs one subcommand; human-readable text goes to `out`, diagnostics to
// `err`. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace smokenet::cli
