#pragma once

namespace sfac::cli {

// Entry point for the `sfac` binary. Exit codes: 0 success, 1 usage error,
// 2 data/format error.
int run(int argc, const char* const* argv);

}  // namespace sfac::cli
