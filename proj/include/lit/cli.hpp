#pragma once

namespace lit::cli {

// Entry point for the `lit` tool. Returns the process exit code:
// 0 success, 2 configuration/usage error, 3 run failure.
int run(int argc, const char* const* argv);

}  // namespace lit::cli
