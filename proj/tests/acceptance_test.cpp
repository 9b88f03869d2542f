// SPDX-License-Identifier: Apache-2.0
//
// Regression gate runner: one pass/fail line per criterion, nonzero exit if
// anything fails. `ccabench verify` runs the same suite.

#include <cstdio>

#include "ccasim/verification.hpp"

int main() {
    auto results = ccasim::run_acceptance();
    for (const auto& r : results) std::printf("%s\n", ccasim::format_criterion_line(r).c_str());
    if (!ccasim::all_passed(results)) {
        std::printf("acceptance: FAILED\n");
        return 1;
    }
    std::printf("acceptance: all %zu criteria passed\n", results.size());
    return 0;
}
