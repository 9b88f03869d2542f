// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace ccasim {

/// One verification criterion of the shipped regression gate.
struct CriterionResult {
    int number = 0;
    std::string name;
    bool passed = false;
    std::string detail;  // empty on success, failure summary otherwise
    double seconds = 0.0;
};

/// Runs the full regression gate: measurement-table reproduction, case-study
/// overheads, differential table checks, world/TLB/timer properties, ledger
/// laws and output determinism.
std::vector<CriterionResult> run_acceptance();

std::string format_criterion_line(const CriterionResult& r);
bool all_passed(const std::vector<CriterionResult>& results);

}  // namespace ccasim
