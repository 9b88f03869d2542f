// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "ccasim/board.hpp"
#include "ccasim/costs.hpp"
#include "ccasim/monitor.hpp"

namespace ccasim {

// --- Granule and realm lifecycle -------------------------------------------

enum class GranuleState : std::uint8_t { Undelegated, Delegated, Rd, Rec, Rtt, Data };

std::string_view granule_state_name(GranuleState s);

/// Legal lifecycle edges: Undelegated<->Delegated and Delegated<->{Rd, Rec,
/// Rtt, Data}. Everything else is rejected.
bool granule_transition_legal(GranuleState from, GranuleState to);

enum class RealmState : std::uint8_t { New, Active, Destroyed };

struct RealmDescriptor {
    std::uint64_t realm_id = 0;
    RealmState state = RealmState::New;
    std::uint32_t ipa_width = 0;
    std::uint64_t cntpoff = 0;  // fixed for the realm's lifetime; zero without ECV
    std::uint64_t rd_granule = 0;
    std::uint64_t rtt_root = 0;
};

enum class FpState : std::uint8_t { TrapsArmed, Restored };
enum class RecExitReason : std::uint8_t { None, FpRestore, TimerExit, Hvc, PageFault, TraceDone };

std::string_view rec_exit_name(RecExitReason r);

struct RecTimer {
    bool masked = false;
    bool pending = false;
};

// --- Guest event traces -----------------------------------------------------

enum class GuestEventKind : std::uint8_t { FpUse, TimerFire, Hvc, Retire };

struct GuestEvent {
    GuestEventKind kind = GuestEventKind::Retire;
    std::uint64_t n = 0;  // Retire only
};

std::vector<GuestEvent> guest_events_from_json(const std::string& text);
std::string guest_events_to_json(std::span<const GuestEvent> events);

struct Rec {
    std::uint64_t rec_granule = 0;
    std::uint64_t realm_id = 0;
    std::uint64_t pc = 0;  // guest events retired
    FpState fp_state = FpState::TrapsArmed;
    /// An FP access trapped and had its state restored but has not executed
    /// yet; the window in which a timer exit re-arms the trap.
    bool fp_resume_pending = false;
    RecExitReason last_exit = RecExitReason::None;
    RecTimer timer;

    // Cursor into the trace attached by the host for the current run.
    std::span<const GuestEvent> trace;
    std::size_t cursor = 0;
    std::vector<RecExitReason> exit_log;
};

// --- RMI / RSI --------------------------------------------------------------

enum class RmiKind : std::uint8_t {
    RoundTrip,  // direct return; the context-switch benchmark probe
    Version,
    GranuleDelegate,
    GranuleUndelegate,
    RealmCreate,
    RealmActivate,
    RealmDestroy,
    RecCreate,
    RecEnter,
};

struct RmiCommand {
    RmiKind kind = RmiKind::RoundTrip;
    std::uint64_t pa = 0;         // granule ops, rec/rd granules
    std::uint64_t rd = 0;         // realm-addressed ops
    std::uint64_t rtt = 0;        // realm create
    std::uint32_t ipa_width = 0;  // realm create
};

enum class RmiStatus : std::uint8_t {
    Success = 0,
    IllegalGranuleTransition = 1,
    RealmNotNew = 2,
    RealmNotActive = 3,
    BadParameters = 4,
    NotSupported = 5,
};

std::string_view rmi_status_name(RmiStatus s);

struct RecExitInfo {
    RecExitReason reason = RecExitReason::None;
    std::uint64_t retired_delta = 0;
    std::size_t events_consumed = 0;
};

struct RmiResult {
    RmiStatus status = RmiStatus::Success;
    std::uint64_t value0 = 0;  // VERSION: interface version
    std::optional<RecExitInfo> exit;
};

enum class RsiStatus : std::uint8_t { Success, UnknownCommand, WrongWorld };

struct RsiResult {
    RsiStatus status = RsiStatus::Success;
    std::uint32_t version_major = 0;
    std::uint32_t version_minor = 0;
};

constexpr std::uint64_t kRmiAbiVersion = (1ULL << 16);      // 1.0
constexpr std::uint32_t kRsiVersionMajor = 1;
constexpr std::uint32_t kRsiVersionMinor = 0;

/// Delegation invoked from the boot-time loop is charged at its own
/// calibrated per-granule weight instead of the standalone RMI path.
enum class DelegationPath : std::uint8_t { Standalone, BootBatch };

// --- Translation geometry ----------------------------------------------------

enum class StartLevelError : std::uint8_t { UnsupportedVaBits };

struct StartLevel {
    int start_level = 0;
    int walk_depth = 0;
    std::uint32_t effective_va_bits = 0;
};

/// Table base level for a 4 KB-granule regime covering va_bits of address
/// space. Without small translation tables a level-3 base is unavailable and
/// the space is widened to 64 MB, forcing a level-2 base.
std::variant<StartLevel, StartLevelError> compute_start_level(std::uint32_t va_bits, bool has_ttst);

struct RmmAddressSpace {
    std::uint64_t low_base = 0;   // identity-mapped shared range (TTBR0 role)
    std::uint64_t low_size = 0;
    std::uint32_t high_va_bits = 0;  // core-private range (TTBR1 role)
    int start_level = 0;
    int walk_depth = 0;
};

// --- Stage-2 and the cache-visibility model ---------------------------------

enum class Cacheability : std::uint8_t { WriteBack, NonCacheable };

struct Stage2Attrs {
    Cacheability cacheability = Cacheability::WriteBack;
    bool fwb_forced = false;
};

struct Stage2Entry {
    std::uint64_t pa = 0;
    Stage2Attrs attrs;
    bool coherent = true;  // guest writes immediately visible to other worlds
};

enum class Stage2Error : std::uint8_t { NotOwnedGranule, UnknownRealm, Unaligned };
enum class MemAccessError : std::uint8_t { Unmapped };

struct RmmFlags {
    bool fwb_maintenance = true;  // stage-2 attribute change + cache maintenance
    bool fp_timer_fix = true;     // keep the timer masked across FP-restore exits
};

/// Realm Management Monitor model. Owns the granule and realm lifecycle
/// state, the per-realm stage-2 maps, and the REC event machine. All world
/// switching and protection-table work is forwarded to the monitor.
class Rmm {
public:
    Rmm(const BoardProfile& profile, Monitor& monitor, PmuLedger& ledger, RmmFlags flags);

    const RmmAddressSpace& address_space() const { return address_space_; }
    const RmmFlags& flags() const { return flags_; }
    void set_fp_timer_fix(bool on) { flags_.fp_timer_fix = on; }
    void set_fwb_maintenance(bool on) { flags_.fwb_maintenance = on; }

    /// Full RMI handler. Charges the RMM dispatch base plus the per-command
    /// handler weight; lifecycle state advances only along legal edges and
    /// failed commands leave all state unchanged.
    RmiResult handle(const RmiCommand& cmd, CoreId core = 0,
                     DelegationPath path = DelegationPath::Standalone);

    RsiResult rsi_version(World caller_world);
    RsiResult rsi_unknown(World caller_world);

    GranuleState granule_state(std::uint64_t pa) const;
    const RealmDescriptor* realm_by_rd(std::uint64_t rd) const;
    const RealmDescriptor* realm_by_id(std::uint64_t id) const;
    Rec* rec_at(std::uint64_t rec_granule);
    std::size_t realm_count() const { return realms_.size(); }

    // Stage-2 surface.
    std::optional<Stage2Error> stage2_map(std::uint64_t rd, std::uint64_t ipa, std::uint64_t pa,
                                          Cacheability requested, CoreId core = 0);
    const Stage2Entry* stage2_lookup(std::uint64_t rd, std::uint64_t ipa) const;
    std::size_t stage2_pending_maintenance(std::uint64_t rd) const;

    /// Guest store through the realm's stage-2 mapping.
    std::optional<MemAccessError> guest_write(std::uint64_t rd, std::uint64_t ipa,
                                              std::uint64_t value);
    /// Deterministic cache model: non-coherent guest writes stay invisible to
    /// normal/root observers until maintenance would have run.
    std::variant<std::uint64_t, MemAccessError> memory_read_visible(World observer,
                                                                    std::uint64_t pa) const;

    // REC execution. The host attaches a trace, then re-enters through
    // RMI_REC_ENTER until the trace is consumed.
    void attach_trace(Rec& rec, std::span<const GuestEvent> events);

private:
    RmiResult cmd_round_trip();
    RmiResult cmd_version();
    RmiResult cmd_granule_delegate(const RmiCommand&, CoreId, DelegationPath);
    RmiResult cmd_granule_undelegate(const RmiCommand&, CoreId, DelegationPath);
    RmiResult cmd_realm_create(const RmiCommand&);
    RmiResult cmd_realm_activate(const RmiCommand&);
    RmiResult cmd_realm_destroy(const RmiCommand&);
    RmiResult cmd_rec_create(const RmiCommand&);
    RmiResult cmd_rec_enter(const RmiCommand&);

    /// Runs attached events until a hypervisor exit or trace end.
    RecExitInfo run_rec_segment(Rec& rec);
    /// Re-entry after a transition to the hypervisor: lazy FP traps re-arm,
    /// the physical timer is masked through CNTP_CTL_EL0, and a guest that is
    /// not parked on an FP access handles the virtual interrupt right away.
    void reenter_after_hypervisor_exit(Rec& rec, CoreId core);

    void set_rec_timer_mask(Rec& rec, bool masked, CoreId core);

    GranuleState& granule_slot(std::uint64_t pa);
    RealmDescriptor* realm_slot(std::uint64_t rd);

    struct MemCell {
        std::uint64_t committed = 0;
        std::optional<std::uint64_t> guest_side;
        bool mapped = false;
    };

    struct RealmStage2 {
        std::map<std::uint64_t, Stage2Entry> entries;       // ipa -> entry
        std::map<std::uint64_t, std::uint64_t> pa_to_ipa;   // reverse, for reads by pa
        std::vector<std::uint64_t> pending_maintenance;     // pa markers, no-FWB profiles
    };

    const BoardProfile* profile_;
    Monitor* monitor_;
    PmuLedger* ledger_;
    RmmFlags flags_;
    RmmAddressSpace address_space_;

    std::unordered_map<std::uint64_t, GranuleState> granules_;     // granule index -> state
    std::unordered_map<std::uint64_t, std::uint64_t> granule_owner_;  // granule index -> realm id
    std::map<std::uint64_t, RealmDescriptor> realms_;              // realm id -> descriptor
    std::unordered_map<std::uint64_t, std::uint64_t> rd_to_realm_;
    std::map<std::uint64_t, Rec> recs_;                            // rec granule -> rec
    std::map<std::uint64_t, RealmStage2> stage2_;                  // realm id -> map
    std::unordered_map<std::uint64_t, MemCell> memory_;            // granule index -> cell
    std::uint64_t next_realm_id_ = 1;
};

}  // namespace ccasim
