// SPDX-License-Identifier: Apache-2.0
#include "ccasim/sim.hpp"

namespace ccasim {

Simulator::Simulator(SimConfig config, CostWeights weights)
    : config_(std::move(config)),
      weights_(std::move(weights)),
      ledger_(weights_, config_.cross_world_pmu) {}

std::variant<SystemBootReport, GptError> Simulator::boot_system() {
    if (auto err = config_.layout.validate()) return *err;  // fail before any phase

    SystemBootReport report;

    {
        LedgerMark mark(ledger_);
        auto built = GptBackend::init(config_.layout, config_.backend);
        if (std::holds_alternative<GptError>(built)) return std::get<GptError>(built);
        GptBackend backend = std::get<GptBackend>(std::move(built));
        ledger_.charge(World::Root, CostPrimitive::GptBuildPerTable,
                       static_cast<std::int64_t>(backend.tables_built()));
        if (backend.kind() == BackendKind::Shadow) {
            // The live table is stamped out of the template.
            ledger_.charge(World::Root, CostPrimitive::GptCopyPerByte,
                           static_cast<std::int64_t>(backend.secondary()->byte_size()));
        }
        monitor_.emplace(config_.profile, std::move(backend), ledger_);
        report.phases.push_back({"gpt_init", mark.delta()});
    }
    {
        LedgerMark mark(ledger_);
        rmm_.emplace(config_.profile, *monitor_, ledger_, config_.rmm_flags);
        report.phases.push_back({"rmm_init", mark.delta()});
    }
    {
        LedgerMark mark(ledger_);
        const MemoryRegion* ram = config_.layout.first_ram();
        alloc_cursor_ = ram ? ram->base : 0;
        report.phases.push_back({"host_start", mark.delta()});
    }

    for (const auto& p : report.phases) report.total += p.cost;
    booted_ = true;
    return report;
}

RmiCommand Simulator::decode_rmi(const SmcCall& call, bool& known) const {
    known = true;
    RmiCommand cmd;
    switch (call.fid) {
        case kRmiFidRoundTrip:
            cmd.kind = RmiKind::RoundTrip;
            break;
        case kRmiFidVersion:
            cmd.kind = RmiKind::Version;
            break;
        case kRmiFidGranuleDelegate:
            cmd.kind = RmiKind::GranuleDelegate;
            cmd.pa = call.args[0];
            break;
        case kRmiFidGranuleUndelegate:
            cmd.kind = RmiKind::GranuleUndelegate;
            cmd.pa = call.args[0];
            break;
        case kRmiFidRealmCreate:
            cmd.kind = RmiKind::RealmCreate;
            cmd.rd = call.args[0];
            cmd.rtt = call.args[1];
            cmd.ipa_width = static_cast<std::uint32_t>(call.args[2]);
            break;
        case kRmiFidRealmActivate:
            cmd.kind = RmiKind::RealmActivate;
            cmd.rd = call.args[0];
            break;
        case kRmiFidRealmDestroy:
            cmd.kind = RmiKind::RealmDestroy;
            cmd.rd = call.args[0];
            break;
        case kRmiFidRecCreate:
            cmd.kind = RmiKind::RecCreate;
            cmd.rd = call.args[0];
            cmd.pa = call.args[1];
            break;
        case kRmiFidRecEnter:
            cmd.kind = RmiKind::RecEnter;
            cmd.pa = call.args[0];
            break;
        default:
            known = false;
            cmd.kind = RmiKind::RoundTrip;  // unassigned window fid: direct return
            break;
    }
    return cmd;
}

void Simulator::encode_rmi_result(const RmiResult& r, SmcResult& out) {
    out.x0 = static_cast<std::int64_t>(r.status);
    out.ret[0] = r.value0;
    if (r.exit) {
        out.ret[1] = (static_cast<std::uint64_t>(r.exit->reason) << 56) |
                     (r.exit->events_consumed & 0x00FF'FFFF'FFFF'FFFFULL);
        out.ret[2] = r.exit->retired_delta;
    }
}

SmcResult Simulator::smc(CoreId core, const SmcCall& call) {
    Monitor& mon = *monitor_;
    World caller = mon.enter_el3(core);
    ledger_.charge(World::Root, CostPrimitive::NseLookup);
    ledger_.charge(World::Root, CostPrimitive::SmcRt);

    SmcResult result;
    if (call.fid == kSmcNoopFid) {
        result.x0 = 0;
    } else if (call.fid >= kRmiFidBase && call.fid <= kRmiFidWindowEnd) {
        if (caller != World::Normal) {
            result.x0 = kSmcNotSupported;  // RMI is the hypervisor's interface
        } else {
            bool known = false;
            RmiCommand cmd = decode_rmi(call, known);
            mon.world_switch(core, World::Realm);
            mon.exit_el3(core);  // run the RMM in (emulated) realm EL2
            RmiResult rmi_result = rmm_->handle(cmd, core);
            if (!known) rmi_result.status = RmiStatus::NotSupported;
            mon.enter_el3(core);
            mon.world_switch(core, World::Normal);
            encode_rmi_result(rmi_result, result);
        }
    } else {
        result.x0 = kSmcNotSupported;  // unknown service: still a full round trip
    }
    mon.exit_el3(core);
    return result;
}

RmiResult Simulator::rmi(const RmiCommand& cmd, CoreId core) {
    SmcCall call;
    switch (cmd.kind) {
        case RmiKind::RoundTrip:
            call.fid = kRmiFidRoundTrip;
            break;
        case RmiKind::Version:
            call.fid = kRmiFidVersion;
            break;
        case RmiKind::GranuleDelegate:
            call.fid = kRmiFidGranuleDelegate;
            call.args = {cmd.pa, 0, 0, 0};
            break;
        case RmiKind::GranuleUndelegate:
            call.fid = kRmiFidGranuleUndelegate;
            call.args = {cmd.pa, 0, 0, 0};
            break;
        case RmiKind::RealmCreate:
            call.fid = kRmiFidRealmCreate;
            call.args = {cmd.rd, cmd.rtt, cmd.ipa_width, 0};
            break;
        case RmiKind::RealmActivate:
            call.fid = kRmiFidRealmActivate;
            call.args = {cmd.rd, 0, 0, 0};
            break;
        case RmiKind::RealmDestroy:
            call.fid = kRmiFidRealmDestroy;
            call.args = {cmd.rd, 0, 0, 0};
            break;
        case RmiKind::RecCreate:
            call.fid = kRmiFidRecCreate;
            call.args = {cmd.rd, cmd.pa, 0, 0};
            break;
        case RmiKind::RecEnter:
            call.fid = kRmiFidRecEnter;
            call.args = {cmd.pa, 0, 0, 0};
            break;
    }

    SmcResult wire = smc(core, call);
    RmiResult out;
    out.status = static_cast<RmiStatus>(wire.x0);
    out.value0 = wire.ret[0];
    if (cmd.kind == RmiKind::RecEnter && out.status == RmiStatus::Success) {
        RecExitInfo exit;
        exit.reason = static_cast<RecExitReason>(wire.ret[1] >> 56);
        exit.events_consumed = static_cast<std::size_t>(wire.ret[1] & 0x00FF'FFFF'FFFF'FFFFULL);
        exit.retired_delta = wire.ret[2];
        out.exit = exit;
    }
    return out;
}

RsiResult Simulator::rsi_version(CoreId core) {
    return rmm_->rsi_version(monitor_->current_world(core));
}

RsiResult Simulator::rsi_raw(CoreId core, std::uint32_t fid) {
    if (fid == kRsiFidVersion) return rsi_version(core);
    return rmm_->rsi_unknown(monitor_->current_world(core));
}

Simulator::ShadowCopy Simulator::create_shadow_gpt() {
    const GptTable* tmpl = nullptr;
    GptTable ephemeral;
    if (monitor_->backend().kind() == BackendKind::Shadow) {
        tmpl = monitor_->backend().secondary();
    } else {
        ephemeral = std::get<GptTable>(GptTable::build(config_.layout));
        tmpl = &ephemeral;
    }
    LedgerMark mark(ledger_);
    ledger_.charge(World::Root, CostPrimitive::GptCopyPerByte,
                   static_cast<std::int64_t>(tmpl->byte_size()));
    return ShadowCopy{tmpl->clone(), mark.delta()};
}

const Simulator::Cvm* Simulator::cvm(std::uint64_t id) const {
    auto it = cvms_.find(id);
    return it == cvms_.end() ? nullptr : &it->second;
}

}  // namespace ccasim
