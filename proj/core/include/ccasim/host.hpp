// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccasim/costs.hpp"

namespace ccasim {

/// Guest configuration mirroring the knobs the benchmark harness exposes.
/// lazy_fraction scales the eagerly delegated share of guest RAM; the
/// default delegates everything at boot.
struct CvmConfig {
    std::uint64_t ram_bytes = 256ULL << 20;
    std::uint32_t vcpus = 1;
    double lazy_fraction = 1.0;
};

struct BootPhase {
    std::string name;
    CostDelta cost;
};

struct CvmBootReport {
    bool completed = false;
    std::string error;
    std::uint64_t cvm_id = 0;
    std::uint64_t ram_bytes = 0;
    std::uint32_t vcpus = 0;
    std::uint64_t granules_delegated = 0;
    std::vector<BootPhase> phases;
    CostDelta total;

    std::string to_json() const;
};

struct GuestRunReport {
    bool ok = false;
    std::string error;
    std::uint64_t retired = 0;
    std::uint64_t injections = 0;   // virtual interrupts delivered, one per timer exit
    std::uint64_t reentries = 0;    // REC entries after the first
    std::map<std::string, std::uint64_t> exit_histogram;
    CostDelta cost;

    std::string to_json() const;
};

struct TeardownReport {
    std::uint64_t ram_granules_undelegated = 0;
    std::uint64_t control_granules_undelegated = 0;
    CostDelta cost;
};

}  // namespace ccasim
