// SPDX-License-Identifier: Apache-2.0
#include "ccasim/host.hpp"

#include <cmath>

#include <json.hpp>

#include "ccasim/sim.hpp"

namespace ccasim {

using json = nlohmann::ordered_json;

namespace {

json cost_to_json(const CostDelta& c) {
    return json{{"instructions", c.instructions.rounded()}, {"cycles", c.cycles.rounded()}};
}

}  // namespace

std::string CvmBootReport::to_json() const {
    json phases_json = json::array();
    for (const auto& p : phases) {
        phases_json.push_back(
            {{"name", p.name},
             {"instructions", p.cost.instructions.rounded()},
             {"cycles", p.cost.cycles.rounded()}});
    }
    json out{{"completed", completed},
             {"cvm_id", cvm_id},
             {"ram_bytes", ram_bytes},
             {"vcpus", vcpus},
             {"granules_delegated", granules_delegated},
             {"phases", phases_json},
             {"total", cost_to_json(total)}};
    if (!error.empty()) out["error"] = error;
    return out.dump(2) + "\n";
}

std::string GuestRunReport::to_json() const {
    json exits = json::object();
    for (const auto& [name, count] : exit_histogram) exits[name] = count;
    json out{{"ok", ok},
             {"retired", retired},
             {"injections", injections},
             {"reentries", reentries},
             {"exits", exits},
             {"cost", cost_to_json(cost)}};
    if (!error.empty()) out["error"] = error;
    return out.dump(2) + "\n";
}

CvmBootReport Simulator::cvm_boot(const CvmConfig& cfg) {
    CvmBootReport report;
    report.ram_bytes = cfg.ram_bytes;
    report.vcpus = cfg.vcpus;

    if (!booted_) {
        report.error = "system not booted";
        return report;
    }
    if (cfg.ram_bytes == 0 || cfg.ram_bytes % kGranuleBytes != 0 || cfg.vcpus == 0 ||
        cfg.lazy_fraction < 0.0 || cfg.lazy_fraction > 1.0) {
        report.error = "bad cvm config";
        return report;
    }
    const MemoryRegion* ram = config_.layout.first_ram();
    std::uint64_t control_bytes = (2 + cfg.vcpus) * kGranuleBytes;  // rd, rtt, one per rec
    if (!ram || alloc_cursor_ + cfg.ram_bytes + control_bytes > ram->end()) {
        report.error = "guest memory does not fit the RAM region";
        return report;
    }

    Cvm cvm;
    cvm.id = next_cvm_id_++;
    cvm.ram_base = alloc_cursor_;
    cvm.ram_bytes = cfg.ram_bytes;
    alloc_cursor_ += cfg.ram_bytes;
    cvm.rd = alloc_cursor_;
    cvm.rtt = alloc_cursor_ + kGranuleBytes;
    for (std::uint32_t v = 0; v < cfg.vcpus; ++v)
        cvm.rec_granules.push_back(alloc_cursor_ + (2 + v) * kGranuleBytes);
    alloc_cursor_ += control_bytes;
    report.cvm_id = cvm.id;

    auto fail = [&](const std::string& what) {
        report.error = what;
        for (const auto& p : report.phases) report.total += p.cost;
        cvms_[cvm.id] = cvm;
        return report;
    };

    // Host-side setup outside the modeled RMI calls (kernel, VMM, image
    // work). Calibrated residually from the measured boot totals.
    {
        LedgerMark mark(ledger_);
        ledger_.charge(World::Normal, CostPrimitive::BootBase);
        report.phases.push_back({"host_setup", mark.delta()});
    }

    // Eager delegation of guest RAM. kvmtool's boot loop is modeled as a
    // batch: the marginal per-granule cost carries its own calibrated weight
    // rather than the standalone RMI path cost.
    {
        LedgerMark mark(ledger_);
        auto eager = static_cast<std::uint64_t>(
            std::llround(cfg.lazy_fraction * static_cast<double>(cfg.ram_bytes / kGranuleBytes)));
        for (std::uint64_t i = 0; i < eager; ++i) {
            RmiCommand cmd{RmiKind::GranuleDelegate, cvm.ram_base + i * kGranuleBytes};
            RmiResult r = rmm_->handle(cmd, 0, DelegationPath::BootBatch);
            if (r.status != RmiStatus::Success) return fail("delegation loop failed");
            ++cvm.granules_delegated;
        }
        if (config_.backend == BackendKind::TwoGpt)
            ledger_.charge(World::Root, CostPrimitive::TwoGptBootConstant);
        report.phases.push_back({"delegate_loop", mark.delta()});
        report.granules_delegated = cvm.granules_delegated;
    }

    {
        LedgerMark mark(ledger_);
        for (std::uint64_t pa : {cvm.rd, cvm.rtt}) {
            if (rmi({RmiKind::GranuleDelegate, pa}).status != RmiStatus::Success)
                return fail("control granule delegation failed");
        }
        RmiCommand create{RmiKind::RealmCreate};
        create.rd = cvm.rd;
        create.rtt = cvm.rtt;
        create.ipa_width = 33;
        if (rmi(create).status != RmiStatus::Success) return fail("realm create failed");
        cvm.realm_id = rmm_->realm_by_rd(cvm.rd)->realm_id;
        report.phases.push_back({"realm_create", mark.delta()});
    }

    {
        LedgerMark mark(ledger_);
        for (std::uint64_t rec : cvm.rec_granules) {
            if (rmi({RmiKind::GranuleDelegate, rec}).status != RmiStatus::Success)
                return fail("rec granule delegation failed");
            RmiCommand cmd{RmiKind::RecCreate};
            cmd.rd = cvm.rd;
            cmd.pa = rec;
            if (rmi(cmd).status != RmiStatus::Success) return fail("rec create failed");
        }
        report.phases.push_back({"rec_create", mark.delta()});
    }

    {
        LedgerMark mark(ledger_);
        RmiCommand cmd{RmiKind::RealmActivate};
        cmd.rd = cvm.rd;
        if (rmi(cmd).status != RmiStatus::Success) return fail("realm activate failed");
        report.phases.push_back({"activate", mark.delta()});
    }

    {
        LedgerMark mark(ledger_);
        RmiCommand cmd{RmiKind::RecEnter};
        cmd.pa = cvm.rec_granules.front();
        if (rmi(cmd).status != RmiStatus::Success) return fail("first rec enter failed");
        report.phases.push_back({"first_enter", mark.delta()});
    }

    for (const auto& p : report.phases) report.total += p.cost;
    cvm.active = true;
    cvms_[cvm.id] = cvm;
    report.completed = true;
    return report;
}

GuestRunReport Simulator::run_guest(std::uint64_t cvm_id, std::span<const GuestEvent> trace,
                                    std::optional<std::uint64_t> budget) {
    GuestRunReport report;
    const Cvm* cvm_ptr = cvm(cvm_id);
    if (!cvm_ptr || !cvm_ptr->active) {
        report.error = "no such active cvm";
        return report;
    }
    const RealmDescriptor* realm = rmm_->realm_by_id(cvm_ptr->realm_id);
    if (!realm || realm->state != RealmState::Active) {
        report.error = "RealmNotActive";
        return report;
    }
    if (trace.empty()) {
        report.ok = true;  // nothing to run, nothing charged
        return report;
    }

    std::uint64_t rec_pa = cvm_ptr->rec_granules.front();
    Rec* rec = rmm_->rec_at(rec_pa);
    std::size_t effective = trace.size();
    if (budget) effective = std::min<std::size_t>(effective, static_cast<std::size_t>(*budget));

    LedgerMark mark(ledger_);
    std::uint64_t pc_before = rec->pc;
    rmm_->attach_trace(*rec, trace.subspan(0, effective));

    std::uint64_t entries = 0;
    for (;;) {
        RmiCommand cmd{RmiKind::RecEnter};
        cmd.pa = rec_pa;
        RmiResult r = rmi(cmd);
        if (r.status != RmiStatus::Success) {
            report.error = std::string(rmi_status_name(r.status));
            report.cost = mark.delta();
            rmm_->attach_trace(*rec, {});
            return report;
        }
        ++entries;
        if (!r.exit) break;
        if (r.exit->reason == RecExitReason::TimerExit) {
            ++report.injections;  // virtual interrupt delivered before re-entry
        } else if (r.exit->reason == RecExitReason::TraceDone) {
            break;
        }
    }

    report.ok = true;
    report.reentries = entries > 0 ? entries - 1 : 0;
    report.retired = rec->pc - pc_before;
    for (RecExitReason reason : rec->exit_log)
        ++report.exit_histogram[std::string(rec_exit_name(reason))];
    report.cost = mark.delta();
    rmm_->attach_trace(*rec, {});  // the caller's trace buffer ends with this call
    return report;
}

TeardownReport Simulator::teardown(std::uint64_t cvm_id) {
    TeardownReport report;
    auto it = cvms_.find(cvm_id);
    if (it == cvms_.end() || !it->second.active) return report;  // second teardown: no-op
    Cvm& cvm = it->second;

    LedgerMark mark(ledger_);

    RmiCommand destroy{RmiKind::RealmDestroy};
    destroy.rd = cvm.rd;
    (void)rmi(destroy);

    for (std::uint64_t pa : cvm.rec_granules) {
        if (rmi({RmiKind::GranuleUndelegate, pa}).status == RmiStatus::Success)
            ++report.control_granules_undelegated;
    }
    for (std::uint64_t pa : {cvm.rtt, cvm.rd}) {
        if (rmi({RmiKind::GranuleUndelegate, pa}).status == RmiStatus::Success)
            ++report.control_granules_undelegated;
    }

    // Bulk undelegation mirrors the boot loop's batch path.
    for (std::uint64_t i = 0; i < cvm.granules_delegated; ++i) {
        RmiCommand cmd{RmiKind::GranuleUndelegate, cvm.ram_base + i * kGranuleBytes};
        RmiResult r = rmm_->handle(cmd, 0, DelegationPath::BootBatch);
        if (r.status == RmiStatus::Success) ++report.ram_granules_undelegated;
    }

    cvm.active = false;
    cvm.granules_delegated = 0;
    report.cost = mark.delta();
    return report;
}

}  // namespace ccasim
