// SPDX-License-Identifier: Apache-2.0
#include "ccasim/rmm.hpp"

#include <stdexcept>

#include <json.hpp>

namespace ccasim {

using json = nlohmann::ordered_json;

std::string_view granule_state_name(GranuleState s) {
    switch (s) {
        case GranuleState::Undelegated: return "undelegated";
        case GranuleState::Delegated: return "delegated";
        case GranuleState::Rd: return "rd";
        case GranuleState::Rec: return "rec";
        case GranuleState::Rtt: return "rtt";
        case GranuleState::Data: return "data";
    }
    return "?";
}

bool granule_transition_legal(GranuleState from, GranuleState to) {
    if (from == to) return false;
    if (from == GranuleState::Undelegated) return to == GranuleState::Delegated;
    if (to == GranuleState::Undelegated) return from == GranuleState::Delegated;
    // Everything else must pass through Delegated.
    return from == GranuleState::Delegated || to == GranuleState::Delegated;
}

std::string_view rec_exit_name(RecExitReason r) {
    switch (r) {
        case RecExitReason::None: return "none";
        case RecExitReason::FpRestore: return "fp_restore";
        case RecExitReason::TimerExit: return "timer";
        case RecExitReason::Hvc: return "hvc";
        case RecExitReason::PageFault: return "page_fault";
        case RecExitReason::TraceDone: return "trace_done";
    }
    return "?";
}

std::string_view rmi_status_name(RmiStatus s) {
    switch (s) {
        case RmiStatus::Success: return "success";
        case RmiStatus::IllegalGranuleTransition: return "IllegalGranuleTransition";
        case RmiStatus::RealmNotNew: return "RealmNotNew";
        case RmiStatus::RealmNotActive: return "RealmNotActive";
        case RmiStatus::BadParameters: return "BadParameters";
        case RmiStatus::NotSupported: return "NotSupported";
    }
    return "?";
}

std::vector<GuestEvent> guest_events_from_json(const std::string& text) {
    json in = json::parse(text);
    if (!in.is_array()) throw std::runtime_error("event trace must be a JSON array");
    std::vector<GuestEvent> events;
    events.reserve(in.size());
    for (const auto& j : in) {
        std::string ev = j.at("ev").get<std::string>();
        if (ev == "FpUse") {
            events.push_back({GuestEventKind::FpUse, 0});
        } else if (ev == "TimerFire") {
            events.push_back({GuestEventKind::TimerFire, 0});
        } else if (ev == "Hvc") {
            events.push_back({GuestEventKind::Hvc, 0});
        } else if (ev == "Retire") {
            events.push_back({GuestEventKind::Retire, j.at("n").get<std::uint64_t>()});
        } else {
            throw std::runtime_error("unknown guest event: " + ev);
        }
    }
    return events;
}

std::string guest_events_to_json(std::span<const GuestEvent> events) {
    json out = json::array();
    for (const auto& e : events) {
        switch (e.kind) {
            case GuestEventKind::FpUse: out.push_back({{"ev", "FpUse"}}); break;
            case GuestEventKind::TimerFire: out.push_back({{"ev", "TimerFire"}}); break;
            case GuestEventKind::Hvc: out.push_back({{"ev", "Hvc"}}); break;
            case GuestEventKind::Retire: out.push_back({{"ev", "Retire"}, {"n", e.n}}); break;
        }
    }
    return out.dump() + "\n";
}

std::variant<StartLevel, StartLevelError> compute_start_level(std::uint32_t va_bits,
                                                              bool has_ttst) {
    if (va_bits < 21 || va_bits > 48) return StartLevelError::UnsupportedVaBits;
    auto levels_needed = static_cast<int>((va_bits - 12 + 8) / 9);  // ceil((va-12)/9)
    int start = 4 - levels_needed;
    std::uint32_t effective = va_bits;
    if (!has_ttst && start == 3) {
        // Level-3 bases need small translation tables; widen to 64 MB and
        // start the walk one level up.
        start = 2;
        effective = 26;
    }
    return StartLevel{start, 4 - start, effective};
}

Rmm::Rmm(const BoardProfile& profile, Monitor& monitor, PmuLedger& ledger, RmmFlags flags)
    : profile_(&profile), monitor_(&monitor), ledger_(&ledger), flags_(flags) {
    std::uint32_t wanted_bits = profile.has_ttst ? 21 : 26;
    auto level = compute_start_level(wanted_bits, profile.has_ttst);
    const auto& sl = std::get<StartLevel>(level);
    address_space_.high_va_bits = sl.effective_va_bits;
    address_space_.start_level = sl.start_level;
    address_space_.walk_depth = sl.walk_depth;
    for (const auto& region : monitor.backend().layout().regions) {
        if (region.name == "rmm") {
            address_space_.low_base = region.base;
            address_space_.low_size = region.size;
            break;
        }
    }
}

GranuleState Rmm::granule_state(std::uint64_t pa) const {
    auto it = granules_.find(pa / kGranuleBytes);
    return it == granules_.end() ? GranuleState::Undelegated : it->second;
}

GranuleState& Rmm::granule_slot(std::uint64_t pa) {
    auto [it, inserted] = granules_.try_emplace(pa / kGranuleBytes, GranuleState::Undelegated);
    return it->second;
}

const RealmDescriptor* Rmm::realm_by_rd(std::uint64_t rd) const {
    auto it = rd_to_realm_.find(rd);
    if (it == rd_to_realm_.end()) return nullptr;
    auto rit = realms_.find(it->second);
    return rit == realms_.end() ? nullptr : &rit->second;
}

const RealmDescriptor* Rmm::realm_by_id(std::uint64_t id) const {
    auto it = realms_.find(id);
    return it == realms_.end() ? nullptr : &it->second;
}

RealmDescriptor* Rmm::realm_slot(std::uint64_t rd) {
    auto it = rd_to_realm_.find(rd);
    if (it == rd_to_realm_.end()) return nullptr;
    auto rit = realms_.find(it->second);
    return rit == realms_.end() ? nullptr : &rit->second;
}

Rec* Rmm::rec_at(std::uint64_t rec_granule) {
    auto it = recs_.find(rec_granule);
    return it == recs_.end() ? nullptr : &it->second;
}

namespace {

RmiResult rmi_status(RmiStatus status) {
    RmiResult r;
    r.status = status;
    return r;
}

}  // namespace

RmiResult Rmm::handle(const RmiCommand& cmd, CoreId core, DelegationPath path) {
    // Every command pays the RMM entry/decode/return base; the boot-batch
    // delegation loop is the one path charged purely per granule.
    if (path == DelegationPath::Standalone)
        ledger_->charge(World::Realm, CostPrimitive::RmiDispatch);

    switch (cmd.kind) {
        case RmiKind::RoundTrip: return cmd_round_trip();
        case RmiKind::Version: return cmd_version();
        case RmiKind::GranuleDelegate: return cmd_granule_delegate(cmd, core, path);
        case RmiKind::GranuleUndelegate: return cmd_granule_undelegate(cmd, core, path);
        case RmiKind::RealmCreate: return cmd_realm_create(cmd);
        case RmiKind::RealmActivate: return cmd_realm_activate(cmd);
        case RmiKind::RealmDestroy: return cmd_realm_destroy(cmd);
        case RmiKind::RecCreate: return cmd_rec_create(cmd);
        case RmiKind::RecEnter: return cmd_rec_enter(cmd);
    }
    return rmi_status(RmiStatus::NotSupported);
}

RmiResult Rmm::cmd_round_trip() { return rmi_status(RmiStatus::Success); }

RmiResult Rmm::cmd_version() {
    ledger_->charge(World::Realm, CostPrimitive::RmiHandlerVersion);
    RmiResult r = rmi_status(RmiStatus::Success);
    r.value0 = kRmiAbiVersion;
    return r;
}

RmiResult Rmm::cmd_granule_delegate(const RmiCommand& cmd, CoreId core, DelegationPath path) {
    if (granule_state(cmd.pa) != GranuleState::Undelegated)
        return rmi_status(RmiStatus::IllegalGranuleTransition);
    auto outcome = monitor_->delegation_service(core, cmd.pa, /*delegate=*/true);
    if (outcome.error) return rmi_status(RmiStatus::IllegalGranuleTransition);
    granule_slot(cmd.pa) = GranuleState::Delegated;

    bool two_gpt = monitor_->backend().kind() == BackendKind::TwoGpt;
    if (path == DelegationPath::Standalone) {
        ledger_->charge(World::Realm, CostPrimitive::DelegateStandalone);
        if (two_gpt) ledger_->charge(World::Realm, CostPrimitive::TwoGptExtraPerDelegate);
    } else {
        ledger_->charge(World::Realm, CostPrimitive::DelegateBootPath);
        if (two_gpt) ledger_->charge(World::Realm, CostPrimitive::TwoGptBootPerGranule);
    }
    return rmi_status(RmiStatus::Success);
}

RmiResult Rmm::cmd_granule_undelegate(const RmiCommand& cmd, CoreId core, DelegationPath path) {
    if (granule_state(cmd.pa) != GranuleState::Delegated)
        return rmi_status(RmiStatus::IllegalGranuleTransition);
    auto outcome = monitor_->delegation_service(core, cmd.pa, /*delegate=*/false);
    if (outcome.error) return rmi_status(RmiStatus::IllegalGranuleTransition);
    granules_.erase(cmd.pa / kGranuleBytes);
    granule_owner_.erase(cmd.pa / kGranuleBytes);

    bool two_gpt = monitor_->backend().kind() == BackendKind::TwoGpt;
    if (path == DelegationPath::Standalone) {
        ledger_->charge(World::Realm, CostPrimitive::DelegateStandalone);
        if (two_gpt) ledger_->charge(World::Realm, CostPrimitive::TwoGptExtraPerDelegate);
    } else {
        ledger_->charge(World::Realm, CostPrimitive::DelegateBootPath);
        if (two_gpt) ledger_->charge(World::Realm, CostPrimitive::TwoGptBootPerGranule);
    }
    return rmi_status(RmiStatus::Success);
}

RmiResult Rmm::cmd_realm_create(const RmiCommand& cmd) {
    ledger_->charge(World::Realm, CostPrimitive::RmiHandlerRealmCreate);
    if (cmd.rd == cmd.rtt || cmd.ipa_width < 16 || cmd.ipa_width > 48)
        return rmi_status(RmiStatus::BadParameters);
    if (rd_to_realm_.contains(cmd.rd)) return rmi_status(RmiStatus::BadParameters);
    if (granule_state(cmd.rd) != GranuleState::Delegated ||
        granule_state(cmd.rtt) != GranuleState::Delegated)
        return rmi_status(RmiStatus::IllegalGranuleTransition);

    RealmDescriptor realm;
    realm.realm_id = next_realm_id_++;
    realm.state = RealmState::New;
    realm.ipa_width = cmd.ipa_width;
    realm.cntpoff = 0;  // fixed at creation; no ECV path ever moves it
    realm.rd_granule = cmd.rd;
    realm.rtt_root = cmd.rtt;

    granule_slot(cmd.rd) = GranuleState::Rd;
    granule_slot(cmd.rtt) = GranuleState::Rtt;
    granule_owner_[cmd.rd / kGranuleBytes] = realm.realm_id;
    granule_owner_[cmd.rtt / kGranuleBytes] = realm.realm_id;
    rd_to_realm_[cmd.rd] = realm.realm_id;
    realms_[realm.realm_id] = realm;
    return rmi_status(RmiStatus::Success);
}

RmiResult Rmm::cmd_realm_activate(const RmiCommand& cmd) {
    ledger_->charge(World::Realm, CostPrimitive::RmiHandlerRealmActivate);
    RealmDescriptor* realm = realm_slot(cmd.rd);
    if (!realm) return rmi_status(RmiStatus::BadParameters);
    if (realm->state != RealmState::New) return rmi_status(RmiStatus::RealmNotNew);
    realm->state = RealmState::Active;
    return rmi_status(RmiStatus::Success);
}

RmiResult Rmm::cmd_realm_destroy(const RmiCommand& cmd) {
    ledger_->charge(World::Realm, CostPrimitive::RmiHandlerRealmDestroy);
    RealmDescriptor* realm = realm_slot(cmd.rd);
    if (!realm || realm->state == RealmState::Destroyed) return rmi_status(RmiStatus::BadParameters);

    // Control and data granules fall back to Delegated; undelegation is a
    // separate step for the host.
    granule_slot(realm->rd_granule) = GranuleState::Delegated;
    granule_slot(realm->rtt_root) = GranuleState::Delegated;
    for (auto& [rec_granule, rec] : recs_) {
        if (rec.realm_id == realm->realm_id) granule_slot(rec_granule) = GranuleState::Delegated;
    }
    if (auto it = stage2_.find(realm->realm_id); it != stage2_.end()) {
        for (const auto& [ipa, entry] : it->second.entries) {
            granule_slot(entry.pa) = GranuleState::Delegated;
            granule_owner_.erase(entry.pa / kGranuleBytes);
        }
        stage2_.erase(it);
    }
    granule_owner_.erase(realm->rd_granule / kGranuleBytes);
    granule_owner_.erase(realm->rtt_root / kGranuleBytes);
    realm->state = RealmState::Destroyed;
    // The rd granule no longer names a live realm; it may be reused after
    // undelegation.
    rd_to_realm_.erase(realm->rd_granule);
    return rmi_status(RmiStatus::Success);
}

RmiResult Rmm::cmd_rec_create(const RmiCommand& cmd) {
    ledger_->charge(World::Realm, CostPrimitive::RmiHandlerRecCreate);
    RealmDescriptor* realm = realm_slot(cmd.rd);
    if (!realm) return rmi_status(RmiStatus::BadParameters);
    if (realm->state != RealmState::New) return rmi_status(RmiStatus::RealmNotNew);
    if (granule_state(cmd.pa) != GranuleState::Delegated)
        return rmi_status(RmiStatus::IllegalGranuleTransition);

    granule_slot(cmd.pa) = GranuleState::Rec;
    granule_owner_[cmd.pa / kGranuleBytes] = realm->realm_id;
    Rec rec;
    rec.rec_granule = cmd.pa;
    rec.realm_id = realm->realm_id;
    recs_[cmd.pa] = std::move(rec);
    return rmi_status(RmiStatus::Success);
}

RmiResult Rmm::cmd_rec_enter(const RmiCommand& cmd) {
    ledger_->charge(World::Realm, CostPrimitive::RmiHandlerRecEnter);
    Rec* rec = rec_at(cmd.pa);
    if (!rec) return rmi_status(RmiStatus::BadParameters);
    const RealmDescriptor* realm = realm_by_id(rec->realm_id);
    if (!realm || realm->state != RealmState::Active) return rmi_status(RmiStatus::RealmNotActive);

    if (rec->last_exit == RecExitReason::TimerExit || rec->last_exit == RecExitReason::Hvc)
        reenter_after_hypervisor_exit(*rec, 0);

    RmiResult result = rmi_status(RmiStatus::Success);
    result.exit = run_rec_segment(*rec);
    return result;
}

RsiResult Rmm::rsi_version(World caller_world) {
    if (caller_world != World::Realm) return RsiResult{RsiStatus::WrongWorld};
    ledger_->charge(World::Realm, CostPrimitive::RsiHandlerVersion);
    return RsiResult{RsiStatus::Success, kRsiVersionMajor, kRsiVersionMinor};
}

RsiResult Rmm::rsi_unknown(World caller_world) {
    if (caller_world != World::Realm) return RsiResult{RsiStatus::WrongWorld};
    return RsiResult{RsiStatus::UnknownCommand};
}

// --- Stage-2 ------------------------------------------------------------------

std::optional<Stage2Error> Rmm::stage2_map(std::uint64_t rd, std::uint64_t ipa, std::uint64_t pa,
                                           Cacheability requested, CoreId core) {
    (void)core;
    if (ipa % kGranuleBytes != 0 || pa % kGranuleBytes != 0) return Stage2Error::Unaligned;
    RealmDescriptor* realm = realm_slot(rd);
    if (!realm) return Stage2Error::UnknownRealm;

    GranuleState state = granule_state(pa);
    auto owner = granule_owner_.find(pa / kGranuleBytes);
    bool owned_by_realm = owner != granule_owner_.end() && owner->second == realm->realm_id;
    if (state == GranuleState::Data && !owned_by_realm) return Stage2Error::NotOwnedGranule;
    if (state != GranuleState::Data && state != GranuleState::Delegated)
        return Stage2Error::NotOwnedGranule;

    Stage2Entry entry;
    entry.pa = pa;
    if (profile_->has_fwb) {
        // FWB semantics: write-back enforced, no maintenance needed.
        entry.attrs = Stage2Attrs{Cacheability::WriteBack, true};
        entry.coherent = true;
    } else if (flags_.fwb_maintenance) {
        // Attribute change plus cache maintenance per mapped granule.
        entry.attrs = Stage2Attrs{Cacheability::WriteBack, false};
        entry.coherent = true;
        RealmStage2& s2 = stage2_[realm->realm_id];
        s2.pending_maintenance.push_back(pa);
        ledger_->charge(World::Realm, CostPrimitive::Stage2MaintenancePerGranule);
        s2.pending_maintenance.pop_back();  // drained before the call returns
    } else {
        entry.attrs = Stage2Attrs{requested, false};
        entry.coherent = requested == Cacheability::WriteBack;
        if (!entry.coherent) stage2_[realm->realm_id].pending_maintenance.push_back(pa);
    }

    granule_slot(pa) = GranuleState::Data;
    granule_owner_[pa / kGranuleBytes] = realm->realm_id;
    RealmStage2& s2 = stage2_[realm->realm_id];
    s2.entries[ipa] = entry;
    s2.pa_to_ipa[pa] = ipa;
    memory_[pa / kGranuleBytes].mapped = true;
    return std::nullopt;
}

const Stage2Entry* Rmm::stage2_lookup(std::uint64_t rd, std::uint64_t ipa) const {
    const RealmDescriptor* realm = realm_by_rd(rd);
    if (!realm) return nullptr;
    auto it = stage2_.find(realm->realm_id);
    if (it == stage2_.end()) return nullptr;
    auto eit = it->second.entries.find(ipa);
    return eit == it->second.entries.end() ? nullptr : &eit->second;
}

std::size_t Rmm::stage2_pending_maintenance(std::uint64_t rd) const {
    const RealmDescriptor* realm = realm_by_rd(rd);
    if (!realm) return 0;
    auto it = stage2_.find(realm->realm_id);
    return it == stage2_.end() ? 0 : it->second.pending_maintenance.size();
}

std::optional<MemAccessError> Rmm::guest_write(std::uint64_t rd, std::uint64_t ipa,
                                               std::uint64_t value) {
    const RealmDescriptor* realm = realm_by_rd(rd);
    if (!realm) return MemAccessError::Unmapped;
    auto it = stage2_.find(realm->realm_id);
    if (it == stage2_.end()) return MemAccessError::Unmapped;
    auto eit = it->second.entries.find(ipa);
    if (eit == it->second.entries.end()) return MemAccessError::Unmapped;

    MemCell& cell = memory_[eit->second.pa / kGranuleBytes];
    if (eit->second.coherent) {
        cell.committed = value;
        cell.guest_side.reset();
    } else {
        cell.guest_side = value;  // sits in the guest's cache view only
    }
    return std::nullopt;
}

std::variant<std::uint64_t, MemAccessError> Rmm::memory_read_visible(World observer,
                                                                     std::uint64_t pa) const {
    auto it = memory_.find(pa / kGranuleBytes);
    if (it == memory_.end() || !it->second.mapped) return MemAccessError::Unmapped;
    const MemCell& cell = it->second;
    if (observer == World::Realm) return cell.guest_side.value_or(cell.committed);
    return cell.committed;
}

// --- REC execution -------------------------------------------------------------

void Rmm::attach_trace(Rec& rec, std::span<const GuestEvent> events) {
    rec.trace = events;
    rec.cursor = 0;
    rec.exit_log.clear();
}

void Rmm::set_rec_timer_mask(Rec& rec, bool masked, CoreId core) {
    rec.timer.masked = masked;
    // The EL2 mask path needs ECV; the override goes through CNTP_CTL_EL0.
    RegisterFile& regs = monitor_->register_file(core);
    std::uint64_t ctl = kCntpCtlEnable | (masked ? kCntpCtlImask : 0);
    (void)regs.write(*profile_, SysReg::CntpCtlEl0, ctl);
}

void Rmm::reenter_after_hypervisor_exit(Rec& rec, CoreId core) {
    rec.fp_state = FpState::TrapsArmed;  // lazy FP re-arms on every hypervisor transition
    set_rec_timer_mask(rec, true, core);
    rec.timer.pending = false;  // virtual interrupt was delivered
    if (!rec.fp_resume_pending) {
        // Guest is runnable: it services the virtual timer right away and
        // re-arms its own timer control.
        set_rec_timer_mask(rec, false, core);
    }
}

RecExitInfo Rmm::run_rec_segment(Rec& rec) {
    RecExitInfo info;
    std::uint64_t retired_before = rec.pc;

    auto guest_progress = [&](CoreId core) {
        // Forward progress returns timer control to the guest.
        set_rec_timer_mask(rec, false, core);
        rec.timer.pending = false;
    };

    while (rec.cursor < rec.trace.size()) {
        const GuestEvent& ev = rec.trace[rec.cursor];
        switch (ev.kind) {
            case GuestEventKind::FpUse: {
                ++rec.cursor;
                ++info.events_consumed;
                if (rec.fp_state == FpState::TrapsArmed) {
                    // Trap to the RMM, restore FP state, disable further
                    // traps. The access itself has not executed yet.
                    rec.fp_state = FpState::Restored;
                    rec.fp_resume_pending = true;
                    rec.last_exit = RecExitReason::FpRestore;
                    rec.exit_log.push_back(RecExitReason::FpRestore);
                    set_rec_timer_mask(rec, flags_.fp_timer_fix, 0);
                } else {
                    rec.fp_resume_pending = false;
                    guest_progress(0);
                }
                break;
            }
            case GuestEventKind::TimerFire: {
                ++rec.cursor;
                ++info.events_consumed;
                rec.timer.pending = true;
                if (!rec.timer.masked) {
                    rec.last_exit = RecExitReason::TimerExit;
                    rec.exit_log.push_back(RecExitReason::TimerExit);
                    info.reason = RecExitReason::TimerExit;
                    info.retired_delta = rec.pc - retired_before;
                    return info;
                }
                break;
            }
            case GuestEventKind::Retire: {
                ++rec.cursor;
                ++info.events_consumed;
                if (rec.fp_resume_pending) {
                    if (rec.fp_state == FpState::Restored) {
                        rec.fp_resume_pending = false;
                        rec.pc += ev.n;
                        guest_progress(0);
                    }
                    // Still parked on the trapped FP access: the quantum
                    // passes without forward progress. The retry is the next
                    // FpUse event in the trace.
                } else {
                    rec.pc += ev.n;
                    guest_progress(0);
                }
                break;
            }
            case GuestEventKind::Hvc: {
                ++rec.cursor;
                ++info.events_consumed;
                if (rec.fp_resume_pending && rec.fp_state == FpState::TrapsArmed) break;
                rec.fp_resume_pending = false;
                guest_progress(0);
                rec.last_exit = RecExitReason::Hvc;
                rec.exit_log.push_back(RecExitReason::Hvc);
                info.reason = RecExitReason::Hvc;
                info.retired_delta = rec.pc - retired_before;
                return info;
            }
        }
    }

    rec.last_exit = RecExitReason::TraceDone;
    info.reason = RecExitReason::TraceDone;
    info.retired_delta = rec.pc - retired_before;
    return info;
}

}  // namespace ccasim
