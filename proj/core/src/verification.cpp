// SPDX-License-Identifier: Apache-2.0
#include "ccasim/verification.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>

#include "ccasim/scenario.hpp"
#include "ccasim/sim.hpp"
#include "ccasim/util.hpp"

namespace ccasim {

namespace {

using Clock = std::chrono::steady_clock;

struct Check {
    bool ok = true;
    std::string detail;

    void expect(bool condition, const std::string& what) {
        if (!condition) {
            ok = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

const std::vector<Measurement>& table_rows() {
    static const std::vector<Measurement> rows = {
        {"smc_rt", "single", 0, 182, 421},
        {"rmi_rt", "single", 0, 932, 3370},
        {"rmi_version", "single", 0, 994, 3583},
        {"rmi_delegate", "single", 0, 2865, 7988},
        {"rmi_delegate", "two-gpt", 0, 3488, 8654},
        {"cvm_boot", "single", 256ULL << 20, 1'900'000'000, 2'647'000'000},
        {"cvm_boot", "single", 1ULL << 30, 2'015'000'000, 2'869'000'000},
        {"cvm_boot", "two-gpt", 256ULL << 20, 1'928'000'000, 2'690'000'000},
        {"cvm_boot", "two-gpt", 1ULL << 30, 2'039'000'000, 2'902'000'000},
        {"shadow_gpt_create", "single", 0, 50'860'000, 34'610'000},
    };
    return rows;
}

ResultRow run_row(ScenarioId id, BackendKind backend, std::uint64_t ram,
                  const CostWeights& weights, std::uint32_t iterations = 3) {
    ScenarioParams params;
    params.id = id;
    params.backend = backend;
    params.ram_bytes = ram ? ram : params.ram_bytes;
    params.iterations = iterations;
    auto outcome = run_scenario(params, weights);
    if (outcome.error || outcome.rows.empty()) {
        ResultRow row;
        row.scenario = "error:" + outcome.detail;
        return row;
    }
    return outcome.rows.front();
}

std::string show(const Ratio& r) { return r.to_decimal_string(); }

std::unique_ptr<Simulator> booted_sim(BackendKind backend,
                                       BoardProfile profile = BoardProfile::rk3588(),
                                       MemoryLayout layout = MemoryLayout::default_layout(),
                                       RmmFlags flags = {}) {
    SimConfig config;
    config.profile = std::move(profile);
    config.layout = std::move(layout);
    config.backend = backend;
    config.rmm_flags = flags;
    auto sim = std::make_unique<Simulator>(std::move(config), CostWeights::defaults());
    (void)sim->boot_system();
    return sim;
}

// --- criterion bodies ---------------------------------------------------------

void c1_micro_exact(Check& c) {
    struct Row {
        ScenarioId id;
        BackendKind backend;
        std::int64_t instr;
        std::int64_t cycles;
    };
    const Row expected[] = {
        {ScenarioId::SmcRt, BackendKind::Single, 182, 421},
        {ScenarioId::RmiRt, BackendKind::Single, 932, 3370},
        {ScenarioId::RmiVersion, BackendKind::Single, 994, 3583},
        {ScenarioId::RmiDelegate, BackendKind::Single, 2865, 7988},
        {ScenarioId::RmiDelegate, BackendKind::TwoGpt, 3488, 8654},
    };
    for (const auto& e : expected) {
        auto started = Clock::now();
        ResultRow row = run_row(e.id, e.backend, 0, CostWeights::defaults());
        double secs = std::chrono::duration<double>(Clock::now() - started).count();
        std::string label = std::string(scenario_name(e.id)) + "/" +
                            std::string(backend_kind_name(e.backend));
        c.expect(row.mean_instructions == Ratio(e.instr) && row.mean_cycles == Ratio(e.cycles),
                 label + " expected (" + std::to_string(e.instr) + "," + std::to_string(e.cycles) +
                     ") got (" + show(row.mean_instructions) + "," + show(row.mean_cycles) + ")");
        c.expect(row.stdev_instructions == 0.0 && row.stdev_cycles == 0.0, label + " stdev not 0");
        c.expect(secs < 1.0, label + " took " + std::to_string(secs) + "s");
    }
}

void c2_overheads(Check& c) {
    const CostWeights weights = CostWeights::defaults();
    auto single = run_row(ScenarioId::RmiDelegate, BackendKind::Single, 0, weights);
    auto twogpt = run_row(ScenarioId::RmiDelegate, BackendKind::TwoGpt, 0, weights);
    auto delegate_cmp = compare({single}, {twogpt});
    c.expect(std::holds_alternative<std::vector<OverheadRow>>(delegate_cmp), "delegate compare failed");
    if (c.ok) {
        const auto& row = std::get<std::vector<OverheadRow>>(delegate_cmp).front();
        c.expect(std::fabs(row.instructions_pct - 21.7) <= 0.1,
                 "delegate instr overhead " + std::to_string(row.instructions_pct));
        c.expect(std::fabs(row.cycles_pct - 8.3) <= 0.1,
                 "delegate cycle overhead " + std::to_string(row.cycles_pct));
    }

    auto boot_single = run_row(ScenarioId::CvmBoot, BackendKind::Single, 1ULL << 30, weights);
    auto boot_twogpt = run_row(ScenarioId::CvmBoot, BackendKind::TwoGpt, 1ULL << 30, weights);
    auto boot_cmp = compare({boot_single}, {boot_twogpt});
    c.expect(std::holds_alternative<std::vector<OverheadRow>>(boot_cmp), "boot compare failed");
    if (std::holds_alternative<std::vector<OverheadRow>>(boot_cmp)) {
        const auto& row = std::get<std::vector<OverheadRow>>(boot_cmp).front();
        c.expect(std::fabs(row.instructions_pct - 1.19) <= 0.05,
                 "boot instr overhead " + std::to_string(row.instructions_pct));
        c.expect(std::fabs(row.cycles_pct - 1.15) <= 0.05,
                 "boot cycle overhead " + std::to_string(row.cycles_pct));
    }
}

void c3_boot_calibration(Check& c) {
    auto calibrated = calibrate(table_rows(), 131104);
    c.expect(calibrated.weights.has_value(), "calibration failed: " + calibrated.detail);
    if (!calibrated.weights) return;

    for (const auto& m : table_rows()) {
        if (m.scenario != "cvm_boot") continue;
        BackendKind backend =
            m.backend == "two-gpt" ? BackendKind::TwoGpt : BackendKind::Single;
        ResultRow row = run_row(ScenarioId::CvmBoot, backend, m.ram_bytes, *calibrated.weights, 1);
        double instr = row.mean_instructions.to_double();
        double cycles = row.mean_cycles.to_double();
        double instr_err = std::fabs(instr - static_cast<double>(m.instructions)) /
                           static_cast<double>(m.instructions);
        double cycle_err =
            std::fabs(cycles - static_cast<double>(m.cycles)) / static_cast<double>(m.cycles);
        std::string label = "boot " + m.backend + "/" + format_byte_size(m.ram_bytes);
        c.expect(instr_err <= 0.005, label + " instr off by " + std::to_string(instr_err * 100) + "%");
        c.expect(cycle_err <= 0.005, label + " cycles off by " + std::to_string(cycle_err * 100) + "%");
    }

    for (BackendKind backend : {BackendKind::Single, BackendKind::TwoGpt}) {
        CostDelta previous;
        bool first = true;
        for (std::uint64_t ram : {64ULL << 20, 128ULL << 20, 256ULL << 20, 512ULL << 20, 1ULL << 30}) {
            auto sim = booted_sim(backend);
            CvmBootReport report = sim->cvm_boot(CvmConfig{ram, 1, 1.0});
            c.expect(report.completed, "boot failed at " + format_byte_size(ram));
            if (!first) {
                c.expect(report.total.instructions > previous.instructions &&
                             report.total.cycles > previous.cycles,
                         std::string(backend_kind_name(backend)) + " boot cost not monotone at " +
                             format_byte_size(ram));
            }
            previous = report.total;
            first = false;
        }
    }
}

void c4_shadow(Check& c) {
    ResultRow row = run_row(ScenarioId::ShadowGptCreate, BackendKind::Shadow, 0,
                            CostWeights::defaults());
    c.expect(row.mean_instructions == Ratio(50'860'000) && row.mean_cycles == Ratio(34'610'000),
             "shadow cost (" + show(row.mean_instructions) + "," + show(row.mean_cycles) + ")");

    auto sim = booted_sim(BackendKind::Shadow);
    auto copy = sim->create_shadow_gpt();
    auto fresh = std::get<GptTable>(GptTable::build(MemoryLayout::default_layout()));
    c.expect(copy.table.serialize() == fresh.serialize(),
             "shadow copy dump differs from a fresh build");
}

void c5_oracle_equivalence(Check& c) {
    auto started = Clock::now();

    // 4 GB layout, sampled verification.
    {
        auto sim = booted_sim(BackendKind::Single);
        Monitor& mon = sim->monitor();
        GranuleOracle oracle(sim->config().layout);
        const std::uint64_t covered = mon.backend().primary().covered_bytes();
        const std::uint64_t granules = covered / kGranuleBytes;
        SplitMix64 rng(0x5eed'0001);
        const Gpi palette[] = {Gpi::NoAccess, Gpi::Secure, Gpi::NonSecure,
                               Gpi::Root,     Gpi::Realm,  Gpi::Any};

        std::uint64_t mismatches = 0;
        for (int op = 0; op < 100'000 && mismatches == 0; ++op) {
            std::uint64_t which = rng.below(10);
            if (which < 6) {
                std::uint64_t start = rng.below(granules);
                std::uint64_t len = 1 + rng.below(64);
                len = std::min(len, granules - start);
                Gpi gpi = palette[rng.below(6)];
                auto res = mon.gpt_set(0, start * kGranuleBytes, len * kGranuleBytes, gpi);
                if (std::holds_alternative<GptMutation>(res))
                    oracle.set(start * kGranuleBytes, len * kGranuleBytes, gpi);
            } else {
                std::uint64_t pa = rng.below(granules) * kGranuleBytes;
                bool del = which & 1;
                auto out = mon.delegation_service(0, pa, del);
                if (!out.error) oracle.set(pa, kGranuleBytes, del ? Gpi::Realm : Gpi::NonSecure);
            }
            for (int probe = 0; probe < 8; ++probe) {
                std::uint64_t pa = rng.below(granules) * kGranuleBytes;
                if (mon.backend().primary().walk_unchecked(pa) != oracle.at(pa)) ++mismatches;
            }
            if (op % 20'000 == 19'999 || op == 99'999) {
                for (std::uint64_t g = 0; g < granules; ++g) {
                    if (mon.backend().primary().walk_unchecked(g * kGranuleBytes) !=
                        oracle.at(g * kGranuleBytes)) {
                        ++mismatches;
                        break;
                    }
                }
                c.expect(mon.backend().primary().canonical(), "table lost canonical form");
            }
        }
        mon.tlb_invalidate_all(0);
        c.expect(mismatches == 0, "sampled oracle disagreement on the 4 GB layout");
    }

    // 16 MB layout, exhaustive verification after every operation.
    {
        auto sim = booted_sim(BackendKind::Single, BoardProfile::rk3588(),
                              MemoryLayout::compact(16ULL << 20));
        Monitor& mon = sim->monitor();
        GranuleOracle oracle(sim->config().layout);
        const std::uint64_t granules = mon.backend().primary().covered_bytes() / kGranuleBytes;
        SplitMix64 rng(0x5eed'0002);
        const Gpi palette[] = {Gpi::NoAccess, Gpi::NonSecure, Gpi::Root, Gpi::Realm};

        bool all_equal = true;
        for (int op = 0; op < 2000 && all_equal; ++op) {
            if (rng.below(2) == 0) {
                std::uint64_t start = rng.below(granules);
                std::uint64_t len = 1 + rng.below(512);
                len = std::min(len, granules - start);
                Gpi gpi = palette[rng.below(4)];
                auto res = mon.gpt_set(0, start * kGranuleBytes, len * kGranuleBytes, gpi);
                if (std::holds_alternative<GptMutation>(res))
                    oracle.set(start * kGranuleBytes, len * kGranuleBytes, gpi);
            } else {
                std::uint64_t pa = rng.below(granules) * kGranuleBytes;
                bool del = rng.below(2) == 0;
                auto out = mon.delegation_service(0, pa, del);
                if (!out.error) oracle.set(pa, kGranuleBytes, del ? Gpi::Realm : Gpi::NonSecure);
            }
            for (std::uint64_t g = 0; g < granules; ++g) {
                if (mon.backend().primary().walk_unchecked(g * kGranuleBytes) !=
                    oracle.at(g * kGranuleBytes)) {
                    all_equal = false;
                    break;
                }
            }
        }
        c.expect(all_equal, "exhaustive oracle disagreement on the 16 MB layout");
    }

    double secs = std::chrono::duration<double>(Clock::now() - started).count();
    c.expect(secs < 30.0, "oracle checks took " + std::to_string(secs) + "s");
}

void c6_two_gpt_coupling(Check& c) {
    {
        auto sim = booted_sim(BackendKind::TwoGpt, BoardProfile::rk3588(),
                              MemoryLayout::compact(64ULL << 20));
        Monitor& mon = sim->monitor();
        const MemoryRegion* ram = sim->config().layout.first_ram();
        const std::uint64_t ram_granules = ram->size / kGranuleBytes;
        SplitMix64 rng(0x5eed'0003);

        bool coupled = true;
        for (int op = 0; op < 10'000 && coupled; ++op) {
            std::uint64_t pa = ram->base + rng.below(ram_granules) * kGranuleBytes;
            (void)mon.delegation_service(0, pa, rng.below(2) == 0);
            for (std::uint64_t g = 0; g < ram_granules && coupled; ++g) {
                std::uint64_t check_pa = ram->base + g * kGranuleBytes;
                Gpi g1 = mon.backend().primary().walk_unchecked(check_pa);
                Gpi g2 = mon.backend().secondary()->walk_unchecked(check_pa);
                bool legal = (g1 == Gpi::NonSecure && g2 == Gpi::Root) ||
                             (g1 == Gpi::Realm && g2 == Gpi::NonSecure);
                if (!legal) coupled = false;
            }
        }
        c.expect(coupled, "coupling invariant violated");
    }

    {
        auto sim = booted_sim(BackendKind::TwoGpt);
        auto dump1_before = sim->monitor().backend().primary().serialize();
        auto dump2_before = sim->monitor().backend().secondary()->serialize();
        CvmBootReport boot = sim->cvm_boot(CvmConfig{64ULL << 20, 1, 1.0});
        c.expect(boot.completed, "two-gpt boot failed");
        (void)sim->teardown(boot.cvm_id);
        c.expect(sim->monitor().backend().primary().serialize() == dump1_before,
                 "gpt1 dump differs after teardown");
        c.expect(sim->monitor().backend().secondary()->serialize() == dump2_before,
                 "gpt2 dump differs after teardown");
    }
}

void c7_world_model(Check& c) {
    // Encoding table, all reachable states.
    for (int el = 0; el < 4; ++el) {
        for (bool ns : {false, true}) {
            for (bool nse : {false, true}) {
                auto world = derive_world(ns, nse, static_cast<ExceptionLevel>(el));
                if (el == 3) {
                    c.expect(world == World::Root, "EL3 must be root");
                } else if (ns && !nse) {
                    c.expect(world == World::Normal, "ns=1 nse=0 must be normal");
                } else if (ns && nse) {
                    c.expect(world == World::Realm, "ns=1 nse=1 must be realm");
                } else if (!ns && !nse) {
                    c.expect(world == World::Secure, "ns=0 nse=0 must be secure");
                } else {
                    c.expect(!world.has_value(), "ns=0 nse=1 must be invalid");
                }
            }
        }
    }

    // NS pinning over a random trace on the no-RME profile.
    {
        auto sim = booted_sim(BackendKind::Single);
        bool ns_pinned = true;
        sim->monitor().set_state_probe([&](CoreId, const CoreSecurityState& sec) {
            auto world = derive_world(sec.ns, sec.nse_prime, sec.el);
            if (world == World::Realm && !sec.ns) ns_pinned = false;
        });
        SplitMix64 rng(0x5eed'0004);
        const MemoryRegion* ram = sim->config().layout.first_ram();
        for (int i = 0; i < 2000; ++i) {
            switch (rng.below(4)) {
                case 0: sim->smc(0, SmcCall{kSmcNoopFid, {}}); break;
                case 1: sim->rmi(RmiCommand{RmiKind::Version}); break;
                case 2: sim->rmi(RmiCommand{RmiKind::RoundTrip}); break;
                default: {
                    std::uint64_t pa = ram->base + rng.below(1024) * kGranuleBytes;
                    RmiKind kind = rng.below(2) ? RmiKind::GranuleDelegate
                                                : RmiKind::GranuleUndelegate;
                    sim->rmi(RmiCommand{kind, pa});
                    break;
                }
            }
        }
        c.expect(ns_pinned, "ns dropped to 0 while the realm world was active");
    }

    // Context isolation and save/restore identity over random switches.
    {
        auto sim = booted_sim(BackendKind::Single);
        Monitor& mon = sim->monitor();
        SplitMix64 rng(0x5eed'0005);
        const World targets[] = {World::Normal, World::Secure, World::Realm};
        std::array<BankedRegs, 3> shadow{};  // normal, secure, realm
        auto index_of = [](World w) {
            return w == World::Normal ? 0 : (w == World::Secure ? 1 : 2);
        };
        World current = World::Normal;
        bool identical = true;
        for (int i = 0; i < 10'000 && identical; ++i) {
            BankedRegs& regs = mon.active_regs(0);
            for (int touch = 0; touch < 3; ++touch) {
                std::uint64_t value = rng.next();
                switch (rng.below(5)) {
                    case 0: regs.gpr[rng.below(31)] = value; break;
                    case 1: regs.ttbr0_el2 = value; break;
                    case 2: regs.ttbr1_el2 = value; break;
                    case 3: regs.cntp_ctl_el0 = value & 3; break;
                    default: regs.afsr0_shadow = value; break;
                }
            }
            shadow[static_cast<std::size_t>(index_of(current))] = regs;
            World target = targets[rng.below(3)];
            mon.enter_el3(0);
            mon.world_switch(0, target);
            mon.exit_el3(0);
            current = target;
            if (!(mon.active_regs(0) == shadow[static_cast<std::size_t>(index_of(current))]))
                identical = false;
        }
        c.expect(identical, "banked context diverged from the per-world shadow model");
    }
}

void c8_tlb_modes(Check& c) {
    BoardProfile flush_profile = BoardProfile::rk3588();
    BoardProfile partition_profile = BoardProfile::rk3588();
    partition_profile.asid_partition_mode = true;

    auto flush_sim = booted_sim(BackendKind::Single, flush_profile);
    auto part_sim = booted_sim(BackendKind::Single, partition_profile);

    for (int i = 0; i < 64; ++i) {
        auto va = static_cast<std::uint64_t>(i) * kGranuleBytes;
        for (Simulator* sim : {flush_sim.get(), part_sim.get()}) {
            sim->monitor().set_translation(El2Space::Hypervisor, va, 0xA000'0000ULL + va);
            sim->monitor().set_translation(El2Space::Rmm, va, 0xB000'0000ULL + va);
        }
    }

    auto switch_to = [](Simulator& target_sim, World target) {
        target_sim.monitor().enter_el3(0);
        target_sim.monitor().world_switch(0, target);
        target_sim.monitor().exit_el3(0);
    };

    SplitMix64 rng(0x5eed'0006);
    bool outcomes_equal = true;
    bool flush_mode_empty = true;
    bool partition_invariant = true;
    World current = World::Normal;

    for (int step = 0; step < 4000 && outcomes_equal; ++step) {
        std::uint64_t choice = rng.below(3);
        if (choice == 0) {
            World target = current == World::Normal ? World::Realm : World::Normal;
            switch_to(*flush_sim, target);
            switch_to(*part_sim, target);
            current = target;
            if (flush_sim->monitor().tlb().el2_entry_count() != 0) flush_mode_empty = false;
        } else {
            El2Space space = current == World::Realm ? El2Space::Rmm : El2Space::Hypervisor;
            auto va = rng.below(64) * kGranuleBytes;
            auto a = flush_sim->monitor().translate(0, space, va);
            auto b = part_sim->monitor().translate(0, space, va);
            if (a != b) outcomes_equal = false;
            if (!part_sim->monitor().tlb().asid_partition_holds()) partition_invariant = false;
        }
    }

    c.expect(outcomes_equal, "translation outcomes differ between flush and partition modes");
    c.expect(flush_mode_empty, "EL2 entries survived a realm<->normal switch in flush mode");
    c.expect(partition_invariant, "ASID partition invariant violated");
    c.expect(part_sim->monitor().tlb().flush_count() == 0,
             "partition mode performed " +
                 std::to_string(part_sim->monitor().tlb().flush_count()) + " flushes");
    c.expect(flush_sim->monitor().tlb().flush_count() > 0, "flush mode never flushed");
}

void c9_fp_timer(Check& c) {
    auto started = Clock::now();
    std::vector<GuestEvent> trace;
    for (int i = 0; i < 1000; ++i) {
        trace.push_back({GuestEventKind::FpUse, 0});
        trace.push_back({GuestEventKind::TimerFire, 0});
        trace.push_back({GuestEventKind::Retire, 10});
    }

    for (int pass = 0; pass < 2; ++pass) {  // run twice: values and determinism
        for (bool fix : {false, true}) {
            RmmFlags flags;
            flags.fp_timer_fix = fix;
            auto sim = booted_sim(BackendKind::Single, BoardProfile::rk3588(),
                                       MemoryLayout::default_layout(), flags);
            CvmBootReport boot = sim->cvm_boot(CvmConfig{16ULL << 20, 1, 1.0});
            GuestRunReport run = sim->run_guest(boot.cvm_id, trace);
            c.expect(run.ok, "guest run failed");
            if (fix) {
                c.expect(run.retired == 10'000,
                         "fix on retired " + std::to_string(run.retired) + " of 10000");
            } else {
                c.expect(run.retired == 0,
                         "fix off retired " + std::to_string(run.retired) + " (expected 0)");
                c.expect(run.injections == 1000,
                         "fix off injections " + std::to_string(run.injections));
            }
        }
    }
    double secs = std::chrono::duration<double>(Clock::now() - started).count();
    c.expect(secs < 1.0, "fp/timer reproduction took " + std::to_string(secs) + "s");
}

void c10_fwb_hazard(Check& c) {
    struct Setup {
        BoardProfile profile;
        bool maintenance;
        int expected_stale;  // out of 100
        const char* label;
    };
    const Setup setups[] = {
        {BoardProfile::rk3588(), false, 100, "rk3588 unmitigated"},
        {BoardProfile::rk3588(), true, 0, "rk3588 mitigated"},
        {BoardProfile::fvp_rme(), false, 0, "fvp-rme"},
    };
    SplitMix64 rng(0x5eed'0007);
    for (const auto& setup : setups) {
        RmmFlags flags;
        flags.fwb_maintenance = setup.maintenance;
        auto sim = booted_sim(BackendKind::Single, setup.profile,
                                   MemoryLayout::default_layout(), flags);
        CvmBootReport boot = sim->cvm_boot(CvmConfig{16ULL << 20, 1, 1.0});
        const Simulator::Cvm* cvm = sim->cvm(boot.cvm_id);
        int stale = 0;
        for (int i = 0; i < 100; ++i) {
            auto ipa = static_cast<std::uint64_t>(i) * kGranuleBytes;
            std::uint64_t pa = cvm->ram_base + ipa;
            (void)sim->rmm().stage2_map(cvm->rd, ipa, pa, Cacheability::NonCacheable);
            // interleave extra writes in random order before observing
            std::uint64_t value = rng.next();
            (void)sim->rmm().guest_write(cvm->rd, ipa, value);
            if (rng.below(2)) (void)sim->rmm().guest_write(cvm->rd, ipa, value);
            auto seen = sim->rmm().memory_read_visible(World::Normal, pa);
            if (std::get<std::uint64_t>(seen) != value) ++stale;
        }
        c.expect(stale == setup.expected_stale,
                 std::string(setup.label) + " stale " + std::to_string(stale) + "/100 (expected " +
                     std::to_string(setup.expected_stale) + ")");
    }
}

void c11_ledger_laws(Check& c) {
    SplitMix64 rng(0x5eed'0008);
    CostWeights random_weights;
    for (std::size_t p = 0; p < kCostPrimitiveCount; ++p) {
        auto instr = static_cast<std::int64_t>(rng.below(10'000));
        auto den = static_cast<std::int64_t>(1 + rng.below(7));
        random_weights.set(static_cast<CostPrimitive>(p),
                           CostDelta{Ratio(instr, den), Ratio(static_cast<std::int64_t>(rng.below(10'000)), den)});
    }

    struct ChargeEvent {
        World world;
        CostPrimitive primitive;
        std::int64_t multiplier;
    };
    std::vector<ChargeEvent> trace;
    trace.reserve(10'000);
    for (int i = 0; i < 10'000; ++i) {
        trace.push_back({kAllWorlds[rng.below(4)],
                         static_cast<CostPrimitive>(rng.below(kCostPrimitiveCount)),
                         static_cast<std::int64_t>(rng.below(1000))});
    }

    std::size_t split = trace.size() / 3;
    PmuLedger ab(random_weights, true);
    PmuLedger a(random_weights, true);
    PmuLedger b(random_weights, true);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        ab.charge(trace[i].world, trace[i].primitive, trace[i].multiplier);
        (i < split ? a : b).charge(trace[i].world, trace[i].primitive, trace[i].multiplier);
    }
    c.expect(ab.global() == a.global() + b.global(), "ledger additivity violated (global)");
    for (World w : kAllWorlds) {
        c.expect(ab.per_world(w) == a.per_world(w) + b.per_world(w),
                 "ledger additivity violated (per world)");
    }

    PmuLedger cross(random_weights, true);
    PmuLedger per_world(random_weights, false);
    for (const auto& e : trace) {
        cross.charge(e.world, e.primitive, e.multiplier);
        per_world.charge(e.world, e.primitive, e.multiplier);
    }
    c.expect(cross.global() == per_world.world_sum(),
             "cross-world global differs from the per-world sum");
}

void c12_determinism(Check& c) {
    for (ScenarioId id : all_scenarios()) {
        ScenarioParams params;
        params.id = id;
        params.iterations = 3;
        params.seed = 7;
        if (id == ScenarioId::CvmBoot) params.ram_bytes = 64ULL << 20;

        std::string first;
        std::string second;
        for (std::string* out : {&first, &second}) {
            auto outcome = run_scenario(params, CostWeights::defaults());
            if (outcome.error) {
                c.expect(false, std::string(scenario_name(id)) + " failed: " + outcome.detail);
                return;
            }
            auto emitted = emit_table(outcome.rows, TableFormat::Json);
            *out = std::get<std::string>(emitted);
        }
        c.expect(first == second, std::string(scenario_name(id)) + " output not byte-identical");

        // Seeded noise must be just as reproducible.
        params.noise = NoiseModel{params.seed, 5.0, 9.0};
        auto n1 = run_scenario(params, CostWeights::defaults());
        auto n2 = run_scenario(params, CostWeights::defaults());
        c.expect(std::get<std::string>(emit_table(n1.rows, TableFormat::Json)) ==
                     std::get<std::string>(emit_table(n2.rows, TableFormat::Json)),
                 std::string(scenario_name(id)) + " noisy output not byte-identical");
    }
}

}  // namespace

std::vector<CriterionResult> run_acceptance() {
    struct Entry {
        int number;
        const char* name;
        std::function<void(Check&)> body;
    };
    const Entry entries[] = {
        {1, "microbenchmark reproduction (exact)", c1_micro_exact},
        {2, "case-study overheads", c2_overheads},
        {3, "boot reproduction (calibrated)", c3_boot_calibration},
        {4, "shadow table cost and dump identity", c4_shadow},
        {5, "protection-table oracle equivalence", c5_oracle_equivalence},
        {6, "two-table coupling invariant", c6_two_gpt_coupling},
        {7, "world-model properties", c7_world_model},
        {8, "TLB flush and ASID-partition modes", c8_tlb_modes},
        {9, "FP/timer livelock reproduction", c9_fp_timer},
        {10, "stage-2 write-back hazard reproduction", c10_fwb_hazard},
        {11, "PMU ledger laws", c11_ledger_laws},
        {12, "seeded output determinism", c12_determinism},
    };

    std::vector<CriterionResult> results;
    for (const auto& entry : entries) {
        CriterionResult r;
        r.number = entry.number;
        r.name = entry.name;
        auto started = Clock::now();
        Check check;
        entry.body(check);
        r.seconds = std::chrono::duration<double>(Clock::now() - started).count();
        r.passed = check.ok;
        r.detail = check.detail;
        results.push_back(std::move(r));
    }
    return results;
}

std::string format_criterion_line(const CriterionResult& r) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "[%s] criterion %2d: %s (%.2fs)%s%s",
                  r.passed ? "PASS" : "FAIL", r.number, r.name.c_str(), r.seconds,
                  r.detail.empty() ? "" : " -- ", r.detail.c_str());
    return buf;
}

bool all_passed(const std::vector<CriterionResult>& results) {
    for (const auto& r : results)
        if (!r.passed) return false;
    return true;
}

}  // namespace ccasim
