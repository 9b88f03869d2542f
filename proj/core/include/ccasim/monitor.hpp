// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ccasim/board.hpp"
#include "ccasim/costs.hpp"
#include "ccasim/gpt.hpp"

namespace ccasim {

enum class ExceptionLevel : std::uint8_t { El0 = 0, El1 = 1, El2 = 2, El3 = 3 };

/// Architectural NS bit plus the software world bit kept in the monitor's
/// per-core context memory (the substitute for the missing NSE bit).
struct CoreSecurityState {
    bool ns = true;
    bool nse_prime = false;
    ExceptionLevel el = ExceptionLevel::El2;
};

/// World selection per the Armv9 encoding: EL3 is always root; below EL3 the
/// (NS, NSE) pair picks normal/realm/secure. (0,1) is reserved.
std::optional<World> derive_world(bool ns, bool nse_prime, ExceptionLevel el);

/// Banked register subset saved and restored per world: general-purpose
/// registers, EL2 translation controls as opaque tokens, timer registers and
/// the dummy shadow slots.
struct BankedRegs {
    std::array<std::uint64_t, 31> gpr{};
    std::uint64_t ttbr0_el2 = 0;
    std::uint64_t ttbr1_el2 = 0;
    std::uint64_t cntp_ctl_el0 = kCntpCtlEnable;
    std::uint64_t cntpoff = 0;
    std::uint64_t afsr0_shadow = 0;
    std::uint64_t afsr1_shadow = 0;

    bool operator==(const BankedRegs&) const = default;
};

enum class El2Space : std::uint8_t { Hypervisor, Rmm };

struct TlbEntry {
    std::uint64_t va = 0;
    std::uint16_t asid = 0;
    ExceptionLevel regime = ExceptionLevel::El2;
    World world_tag = World::Normal;  // architectural world at fill time
    El2Space space = El2Space::Hypervisor;
    std::uint64_t pa = 0;
};

/// Reserved ASID window the hypervisor cedes to the RMM in partition mode.
constexpr std::uint16_t kReservedAsidBase = 256;
constexpr std::uint16_t kReservedAsidLimit = 512;
constexpr std::uint16_t kHypervisorAsid = 1;
constexpr std::uint16_t kRmmAsid = kReservedAsidBase;
/// Without the partition the RMM has no coordination channel and ends up on
/// the same ASID as the hypervisor; the per-switch flush is what keeps the
/// two address spaces from aliasing.
constexpr std::uint16_t kRmmAsidUnpartitioned = kHypervisorAsid;

class TlbModel {
public:
    void insert(const TlbEntry& entry) { entries_.push_back(entry); }
    std::optional<std::uint64_t> lookup(std::uint64_t va, std::uint16_t asid,
                                        ExceptionLevel regime, World world_tag) const;

    void flush_all();
    void flush_el2();

    std::size_t entry_count() const { return entries_.size(); }
    std::size_t el2_entry_count() const;
    std::uint64_t flush_count() const { return flush_count_; }

    /// Partition invariant: RMM entries inside the reserved range, hypervisor
    /// entries outside.
    bool asid_partition_holds() const;

    const std::vector<TlbEntry>& entries() const { return entries_; }

private:
    std::vector<TlbEntry> entries_;
    std::uint64_t flush_count_ = 0;
};

struct SystemBootPhase {
    std::string name;
    CostDelta cost;
};

struct SystemBootReport {
    std::vector<SystemBootPhase> phases;
    CostDelta total;
    std::string to_json() const;
};

using CoreId = std::uint32_t;

/// EL3 firmware model: per-core world contexts, world switching with the TLB
/// policy, the PAALLOS-substitute flush, and the granule delegation service
/// the RMM forwards to.
class Monitor {
public:
    Monitor(const BoardProfile& profile, GptBackend backend, PmuLedger& ledger);

    const BoardProfile& profile() const { return *profile_; }
    GptBackend& backend() { return backend_; }
    const GptBackend& backend() const { return backend_; }

    CoreSecurityState security_state(CoreId core) const { return cores_.at(core).sec; }
    World current_world(CoreId core) const;
    BankedRegs& active_regs(CoreId core) { return cores_.at(core).active; }
    RegisterFile& register_file(CoreId core) { return cores_.at(core).regs; }
    const RegisterFile& register_file(CoreId core) const { return cores_.at(core).regs; }

    /// Synchronous EL3 entry. Reads the software world bit from context
    /// memory (charged as the context-memory lookup) and saves the return EL.
    World enter_el3(CoreId core);
    /// Returns to the exception level saved by the matching enter_el3.
    void exit_el3(CoreId core);

    /// Saves the active context into the bank of the world being left and
    /// restores the target bank. Realm<->normal multiplexing on a no-RME
    /// profile flushes the EL2 TLB unless the ASID partition is in effect.
    CostDelta world_switch(CoreId core, World target);

    /// Whole-TLB flush standing in for TLBI PAALLOS; satisfies every pending
    /// GPT maintenance token.
    CostDelta tlb_invalidate_all(CoreId core);

    struct DelegationOutcome {
        std::optional<GptError> error;
        CostDelta cost;
    };
    /// EL3 side of RMI_GRANULE_(UN)DELEGATE: coupled table transition plus
    /// the mandated TLB maintenance.
    DelegationOutcome delegation_service(CoreId core, std::uint64_t pa, bool delegate);

    /// Facade over protection-table range updates; the returned tokens stay
    /// pending until tlb_invalidate_all runs.
    std::variant<GptMutation, GptError> gpt_set(CoreId core, std::uint64_t base, std::uint64_t size,
                                                Gpi gpi);

    std::uint64_t outstanding_tokens() const { return pending_tokens_; }

    // EL2 translation surface. Backing mappings are programmed per space;
    // translate() fills the TLB on a miss.
    void set_translation(El2Space space, std::uint64_t va, std::uint64_t pa);
    std::optional<std::uint64_t> translate(CoreId core, El2Space space, std::uint64_t va);
    const TlbModel& tlb() const { return tlb_; }
    TlbModel& tlb() { return tlb_; }

    /// Invoked after every security-state change; lets tests assert
    /// trace-wide predicates such as NS pinning.
    using StateProbe = std::function<void(CoreId, const CoreSecurityState&)>;
    void set_state_probe(StateProbe probe) { probe_ = std::move(probe); }

    std::uint64_t world_switch_count() const { return world_switch_count_; }

private:
    struct Core {
        CoreSecurityState sec;
        ExceptionLevel return_el = ExceptionLevel::El2;
        BankedRegs active;
        std::array<BankedRegs, 3> banks;  // normal, secure, realm
        RegisterFile regs;
    };

    void notify(CoreId core);
    static std::size_t bank_index(World w);
    std::uint16_t asid_for(El2Space space) const;

    const BoardProfile* profile_;
    GptBackend backend_;
    PmuLedger* ledger_;
    std::vector<Core> cores_;
    TlbModel tlb_;
    std::unordered_map<std::uint64_t, std::uint64_t> hyp_map_;
    std::unordered_map<std::uint64_t, std::uint64_t> rmm_map_;
    std::uint64_t pending_tokens_ = 0;
    std::uint64_t world_switch_count_ = 0;
    StateProbe probe_;
};

}  // namespace ccasim
