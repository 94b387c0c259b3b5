// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace asd::cli {

// Subcommand dispatch. Exit codes: 0 success, 1 usage error, 2 data error,
// 3 verification failure.
int run(int argc, const char* const* argv);

}  // namespace asd::cli
