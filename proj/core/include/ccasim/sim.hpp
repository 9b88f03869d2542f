// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "ccasim/board.hpp"
#include "ccasim/costs.hpp"
#include "ccasim/gpt.hpp"
#include "ccasim/host.hpp"
#include "ccasim/monitor.hpp"
#include "ccasim/rmm.hpp"

namespace ccasim {

// SMC function ids. The RMI window mirrors the SMCCC vendor layout; exact
// values are fixed by this project and documented here.
constexpr std::uint32_t kSmcNoopFid = 0x8400'00FF;          // EL3 round-trip probe
constexpr std::uint32_t kRmiFidBase = 0xC400'0150;
constexpr std::uint32_t kRmiFidVersion = kRmiFidBase + 0;
constexpr std::uint32_t kRmiFidGranuleDelegate = kRmiFidBase + 1;
constexpr std::uint32_t kRmiFidGranuleUndelegate = kRmiFidBase + 2;
constexpr std::uint32_t kRmiFidRealmActivate = kRmiFidBase + 7;
constexpr std::uint32_t kRmiFidRealmCreate = kRmiFidBase + 8;
constexpr std::uint32_t kRmiFidRealmDestroy = kRmiFidBase + 9;
constexpr std::uint32_t kRmiFidRecCreate = kRmiFidBase + 10;
constexpr std::uint32_t kRmiFidRecEnter = kRmiFidBase + 12;
constexpr std::uint32_t kRmiFidRoundTrip = kRmiFidBase + 0xAF;  // direct-return probe
constexpr std::uint32_t kRmiFidWindowEnd = kRmiFidBase + 0xFF;
constexpr std::uint32_t kRsiFidVersion = 0xC400'0190;

constexpr std::int64_t kSmcNotSupported = -1;

struct SmcCall {
    std::uint32_t fid = 0;
    std::array<std::uint64_t, 4> args{};
};

struct SmcResult {
    std::int64_t x0 = 0;
    std::array<std::uint64_t, 3> ret{};
};

struct SimConfig {
    BoardProfile profile = BoardProfile::rk3588();
    MemoryLayout layout = MemoryLayout::default_layout();
    BackendKind backend = BackendKind::Single;
    RmmFlags rmm_flags;
    bool cross_world_pmu = true;
};

/// One self-contained simulator instance: board, EL3 monitor, RMM, host-side
/// VMM state and the cost ledger. Instances share nothing; a harness may run
/// many of them concurrently.
class Simulator {
public:
    Simulator(SimConfig config, CostWeights weights);

    // Monitor and RMM hold pointers back into the instance; it must stay put.
    Simulator(const Simulator&) = delete;
    Simulator& operator=(const Simulator&) = delete;
    Simulator(Simulator&&) = delete;
    Simulator& operator=(Simulator&&) = delete;

    /// System boot: protection tables are built in the BL31 phase, then the
    /// RMM initializes, then the host starts. Fails before any phase runs if
    /// the layout is invalid.
    std::variant<SystemBootReport, GptError> boot_system();
    bool system_booted() const { return booted_; }

    const SimConfig& config() const { return config_; }
    const CostWeights& weights() const { return weights_; }
    PmuLedger& ledger() { return ledger_; }
    const PmuLedger& ledger() const { return ledger_; }
    Monitor& monitor() { return *monitor_; }
    const Monitor& monitor() const { return *monitor_; }
    Rmm& rmm() { return *rmm_; }
    const Rmm& rmm() const { return *rmm_; }

    // --- Wire-level SMC dispatch -------------------------------------------
    SmcResult smc(CoreId core, const SmcCall& call);

    /// Typed RMI issued by the normal-world host; encodes to an SMC and
    /// decodes the result, so it exercises the same path as raw calls.
    RmiResult rmi(const RmiCommand& cmd, CoreId core = 0);

    RsiResult rsi_version(CoreId core = 0);
    RsiResult rsi_raw(CoreId core, std::uint32_t fid);

    // --- Protection-table facade -------------------------------------------
    struct ShadowCopy {
        GptTable table;
        CostDelta cost;
    };
    /// Copies the pre-built template (the backend's own for the shadow
    /// backend, an ephemeral one otherwise); cost scales with table bytes.
    ShadowCopy create_shadow_gpt();

    // --- Host / VMM ----------------------------------------------------------
    struct Cvm {
        std::uint64_t id = 0;
        std::uint64_t realm_id = 0;
        std::uint64_t rd = 0;
        std::uint64_t rtt = 0;
        std::vector<std::uint64_t> rec_granules;
        std::uint64_t ram_base = 0;
        std::uint64_t ram_bytes = 0;
        std::uint64_t granules_delegated = 0;
        bool active = false;
    };

    CvmBootReport cvm_boot(const CvmConfig& cfg);
    GuestRunReport run_guest(std::uint64_t cvm_id, std::span<const GuestEvent> trace,
                             std::optional<std::uint64_t> budget = std::nullopt);
    TeardownReport teardown(std::uint64_t cvm_id);
    const Cvm* cvm(std::uint64_t id) const;

private:
    RmiCommand decode_rmi(const SmcCall& call, bool& known) const;
    static void encode_rmi_result(const RmiResult& r, SmcResult& out);

    SimConfig config_;
    CostWeights weights_;
    PmuLedger ledger_;
    std::optional<Monitor> monitor_;
    std::optional<Rmm> rmm_;
    bool booted_ = false;

    std::map<std::uint64_t, Cvm> cvms_;
    std::uint64_t next_cvm_id_ = 1;
    std::uint64_t alloc_cursor_ = 0;
};

}  // namespace ccasim
