// SPDX-License-Identifier: Apache-2.0
#include "ccasim/monitor.hpp"

#include <algorithm>

#include <json.hpp>

namespace ccasim {

using json = nlohmann::ordered_json;

std::optional<World> derive_world(bool ns, bool nse_prime, ExceptionLevel el) {
    if (el == ExceptionLevel::El3) return World::Root;
    if (ns && !nse_prime) return World::Normal;
    if (ns && nse_prime) return World::Realm;
    if (!ns && !nse_prime) return World::Secure;
    return std::nullopt;  // NS=0, NSE=1 is reserved
}

std::optional<std::uint64_t> TlbModel::lookup(std::uint64_t va, std::uint16_t asid,
                                              ExceptionLevel regime, World world_tag) const {
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
        if (it->va == va && it->asid == asid && it->regime == regime && it->world_tag == world_tag)
            return it->pa;
    }
    return std::nullopt;
}

void TlbModel::flush_all() {
    entries_.clear();
    ++flush_count_;
}

void TlbModel::flush_el2() {
    std::erase_if(entries_, [](const TlbEntry& e) { return e.regime == ExceptionLevel::El2; });
    ++flush_count_;
}

std::size_t TlbModel::el2_entry_count() const {
    return static_cast<std::size_t>(std::count_if(
        entries_.begin(), entries_.end(),
        [](const TlbEntry& e) { return e.regime == ExceptionLevel::El2; }));
}

bool TlbModel::asid_partition_holds() const {
    for (const auto& e : entries_) {
        bool reserved = e.asid >= kReservedAsidBase && e.asid < kReservedAsidLimit;
        if (e.space == El2Space::Rmm && !reserved) return false;
        if (e.space == El2Space::Hypervisor && reserved) return false;
    }
    return true;
}

std::string SystemBootReport::to_json() const {
    json phases_json = json::array();
    for (const auto& p : phases) {
        phases_json.push_back({{"name", p.name},
                               {"instructions", p.cost.instructions.rounded()},
                               {"cycles", p.cost.cycles.rounded()}});
    }
    json out{{"phases", phases_json},
             {"total",
              {{"instructions", total.instructions.rounded()},
               {"cycles", total.cycles.rounded()}}}};
    return out.dump(2) + "\n";
}

Monitor::Monitor(const BoardProfile& profile, GptBackend backend, PmuLedger& ledger)
    : profile_(&profile), backend_(std::move(backend)), ledger_(&ledger) {
    cores_.resize(profile.core_count);
    for (auto& core : cores_) {
        core.regs = RegisterFile::for_profile(profile);
        core.sec = CoreSecurityState{true, false, ExceptionLevel::El2};  // normal world hypervisor
        core.active = BankedRegs{};
    }
}

World Monitor::current_world(CoreId core) const {
    const Core& c = cores_.at(core);
    auto world = derive_world(c.sec.ns, c.sec.nse_prime, c.sec.el);
    return world.value_or(World::Normal);
}

void Monitor::notify(CoreId core) {
    if (probe_) probe_(core, cores_.at(core).sec);
}

std::size_t Monitor::bank_index(World w) {
    switch (w) {
        case World::Normal: return 0;
        case World::Secure: return 1;
        case World::Realm: return 2;
        case World::Root: break;
    }
    return 0;  // root context is the monitor's own, never banked
}

World Monitor::enter_el3(CoreId core) {
    Core& c = cores_.at(core);
    c.return_el = c.sec.el;
    // Both NS (from SCR_EL3) and the software bit (from context memory) are
    // consulted to name the calling world. The dispatcher charges the
    // context-memory lookup once per logical round trip.
    World caller = derive_world(c.sec.ns, c.sec.nse_prime, c.return_el).value_or(World::Normal);
    c.sec.el = ExceptionLevel::El3;
    notify(core);
    return caller;
}

void Monitor::exit_el3(CoreId core) {
    Core& c = cores_.at(core);
    c.sec.el = c.return_el;
    notify(core);
}

CostDelta Monitor::world_switch(CoreId core, World target) {
    Core& c = cores_.at(core);
    World from = derive_world(c.sec.ns, c.sec.nse_prime, c.return_el).value_or(World::Normal);

    c.banks[bank_index(from)] = c.active;
    c.active = c.banks[bank_index(target)];

    c.sec.ns = target != World::Secure;
    c.sec.nse_prime = target == World::Realm;
    c.regs.set_ns(c.sec.ns);
    ++world_switch_count_;

    CostDelta cost = ledger_->charge(World::Root, CostPrimitive::WorldSwitch);

    bool multiplexing = (from == World::Normal && target == World::Realm) ||
                        (from == World::Realm && target == World::Normal);
    if (multiplexing && !profile_->has_rme && !profile_->asid_partition_mode) {
        // Realm and normal world share the architectural normal world, so
        // stale EL2 translations must not survive the multiplex.
        tlb_.flush_el2();
    }
    notify(core);
    return cost;
}

CostDelta Monitor::tlb_invalidate_all(CoreId core) {
    (void)core;
    tlb_.flush_all();
    pending_tokens_ = 0;
    return ledger_->charge(World::Root, CostPrimitive::TlbFullFlush);
}

Monitor::DelegationOutcome Monitor::delegation_service(CoreId core, std::uint64_t pa,
                                                       bool delegate) {
    auto result = delegate ? backend_.delegate_granule(pa) : backend_.undelegate_granule(pa);
    if (std::holds_alternative<GptError>(result))
        return DelegationOutcome{std::get<GptError>(result), {}};
    pending_tokens_ += std::get<GptMutation>(result).tokens.size();
    CostDelta cost = tlb_invalidate_all(core);
    return DelegationOutcome{std::nullopt, cost};
}

std::variant<GptMutation, GptError> Monitor::gpt_set(CoreId core, std::uint64_t base,
                                                     std::uint64_t size, Gpi gpi) {
    (void)core;
    auto result = backend_.set_primary(base, size, gpi);
    if (std::holds_alternative<GptError>(result)) return result;
    const GptMutation& m = std::get<GptMutation>(result);
    pending_tokens_ += m.tokens.size();
    ledger_->charge(World::Root, CostPrimitive::GptSetPerGranule,
                    static_cast<std::int64_t>(m.granules_changed));
    return result;
}

std::uint16_t Monitor::asid_for(El2Space space) const {
    if (space == El2Space::Hypervisor) return kHypervisorAsid;
    return profile_->asid_partition_mode ? kRmmAsid : kRmmAsidUnpartitioned;
}

void Monitor::set_translation(El2Space space, std::uint64_t va, std::uint64_t pa) {
    (space == El2Space::Hypervisor ? hyp_map_ : rmm_map_)[va] = pa;
}

std::optional<std::uint64_t> Monitor::translate(CoreId core, El2Space space, std::uint64_t va) {
    const Core& c = cores_.at(core);
    World arch_world = World::Normal;
    if (profile_->has_rme)
        arch_world = derive_world(c.sec.ns, c.sec.nse_prime, ExceptionLevel::El2)
                         .value_or(World::Normal);
    // Without RME both the hypervisor and the RMM execute in the
    // architectural normal world, so their entries are distinguishable only
    // by ASID.
    std::uint16_t asid = asid_for(space);
    if (auto hit = tlb_.lookup(va, asid, ExceptionLevel::El2, arch_world)) return hit;

    const auto& map = space == El2Space::Hypervisor ? hyp_map_ : rmm_map_;
    auto it = map.find(va);
    if (it == map.end()) return std::nullopt;
    tlb_.insert(TlbEntry{va, asid, ExceptionLevel::El2, arch_world, space, it->second});
    return it->second;
}

}  // namespace ccasim
