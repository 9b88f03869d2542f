// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <memory>

#include "ccasim/sim.hpp"
#include "ccasim/util.hpp"

using namespace ccasim;

namespace {

std::unique_ptr<Simulator> booted(SimConfig config = {}) {
    auto sim = std::make_unique<Simulator>(std::move(config), CostWeights::defaults());
    auto report = sim->boot_system();
    REQUIRE(std::holds_alternative<SystemBootReport>(report));
    return sim;
}

std::unique_ptr<Simulator> booted_fvp() {
    SimConfig config;
    config.profile = BoardProfile::fvp_rme();
    return booted(std::move(config));
}

}  // namespace

TEST_CASE("start level computation") {
    // brute-force oracle: smallest walk depth whose 4 KB-granule coverage
    // reaches the requested address-space size
    auto oracle_depth = [](std::uint32_t va_bits) {
        for (int depth = 1; depth <= 4; ++depth)
            if (12 + 9 * depth >= static_cast<int>(va_bits)) return depth;
        return 4;
    };

    for (std::uint32_t va = 21; va <= 48; ++va) {
        auto with_ttst = std::get<StartLevel>(compute_start_level(va, true));
        CHECK(with_ttst.walk_depth == oracle_depth(va));
        CHECK(with_ttst.start_level == 4 - oracle_depth(va));

        auto without = std::get<StartLevel>(compute_start_level(va, false));
        if (oracle_depth(va) == 1) {
            // level-3 bases need small translation tables
            CHECK(without.start_level == 2);
            CHECK(without.walk_depth == 2);
            CHECK(without.effective_va_bits == 26);
        } else {
            CHECK(without.start_level == with_ttst.start_level);
        }
    }

    CHECK(std::get<StartLevel>(compute_start_level(21, true)).start_level == 3);
    CHECK(std::get<StartLevel>(compute_start_level(21, true)).walk_depth == 1);
    CHECK(std::get<StartLevel>(compute_start_level(26, false)).start_level == 2);
    CHECK(std::get<StartLevel>(compute_start_level(26, false)).walk_depth == 2);
    CHECK(std::get<StartLevel>(compute_start_level(48, true)).start_level == 0);
    CHECK(std::get<StartLevel>(compute_start_level(48, false)).walk_depth == 4);

    CHECK(std::get<StartLevelError>(compute_start_level(20, true)) ==
          StartLevelError::UnsupportedVaBits);
    CHECK(std::get<StartLevelError>(compute_start_level(49, false)) ==
          StartLevelError::UnsupportedVaBits);
}

TEST_CASE("the RMM picks its high-memory geometry from the TTST flag") {
    auto rk = booted();
    CHECK(rk->rmm().address_space().high_va_bits == 26);
    CHECK(rk->rmm().address_space().start_level == 2);

    auto fvp = booted_fvp();
    CHECK(fvp->rmm().address_space().high_va_bits == 21);
    CHECK(fvp->rmm().address_space().start_level == 3);
}

TEST_CASE("RMI round trips charge the measured totals") {
    auto sim = booted();

    LedgerMark rt_mark(sim->ledger());
    CHECK(sim->rmi(RmiCommand{RmiKind::RoundTrip}).status == RmiStatus::Success);
    CostDelta rt_cost = rt_mark.delta();
    CHECK(rt_cost == CostDelta{Ratio(932), Ratio(3370)});

    LedgerMark version_mark(sim->ledger());
    RmiResult version = sim->rmi(RmiCommand{RmiKind::Version});
    CHECK(version.status == RmiStatus::Success);
    CHECK(version.value0 == kRmiAbiVersion);
    CostDelta version_cost = version_mark.delta();
    CHECK(version_cost == CostDelta{Ratio(994), Ratio(3583)});
    // version costs exactly 213 cycles more than the bare round trip
    CHECK(version_cost.cycles - rt_cost.cycles == Ratio(213));
}

TEST_CASE("granule lifecycle accepts exactly the legal edges") {
    auto sim = booted();
    std::uint64_t base = sim->config().layout.first_ram()->base;
    SplitMix64 rng(71);

    // independent transition relation used as the oracle
    std::map<std::uint64_t, GranuleState> reference;
    auto ref_state = [&](std::uint64_t pa) {
        auto it = reference.find(pa);
        return it == reference.end() ? GranuleState::Undelegated : it->second;
    };

    constexpr int kGranulePool = 32;
    std::uint64_t rd_pa = 0;
    bool realm_exists = false;

    for (int step = 0; step < 4000; ++step) {
        std::uint64_t pa = base + rng.below(kGranulePool) * kGranuleBytes;
        switch (rng.below(4)) {
            case 0: {
                GranuleState before = ref_state(pa);
                RmiResult r = sim->rmi(RmiCommand{RmiKind::GranuleDelegate, pa});
                // the delegate command implements exactly Undelegated -> Delegated
                CHECK((r.status == RmiStatus::Success) == (before == GranuleState::Undelegated));
                if (r.status == RmiStatus::Success) {
                    CHECK(granule_transition_legal(before, GranuleState::Delegated));
                    reference[pa] = GranuleState::Delegated;
                } else {
                    CHECK(sim->rmm().granule_state(pa) == before);  // rejected: unchanged
                }
                break;
            }
            case 1: {
                GranuleState before = ref_state(pa);
                RmiResult r = sim->rmi(RmiCommand{RmiKind::GranuleUndelegate, pa});
                CHECK((r.status == RmiStatus::Success) == (before == GranuleState::Delegated));
                if (r.status == RmiStatus::Success) {
                    CHECK(granule_transition_legal(before, GranuleState::Undelegated));
                    reference[pa] = GranuleState::Undelegated;
                } else {
                    CHECK(sim->rmm().granule_state(pa) == before);
                }
                break;
            }
            case 2: {
                if (realm_exists) break;
                std::uint64_t rtt = base + (kGranulePool + 1) * kGranuleBytes;
                (void)sim->rmi(RmiCommand{RmiKind::GranuleDelegate, pa});
                if (ref_state(pa) == GranuleState::Undelegated) reference[pa] = GranuleState::Delegated;
                (void)sim->rmi(RmiCommand{RmiKind::GranuleDelegate, rtt});
                RmiCommand create{RmiKind::RealmCreate};
                create.rd = pa;
                create.rtt = rtt;
                create.ipa_width = 33;
                RmiResult r = sim->rmi(create);
                bool legal = ref_state(pa) == GranuleState::Delegated && pa != rtt;
                if (r.status == RmiStatus::Success) {
                    CHECK(legal);
                    reference[pa] = GranuleState::Rd;
                    realm_exists = true;
                    rd_pa = pa;
                }
                break;
            }
            default: {
                // state queried mid-trace must match the reference map
                CHECK(sim->rmm().granule_state(pa) == ref_state(pa));
                break;
            }
        }
    }
    (void)rd_pa;
    for (const auto& [pa, state] : reference) CHECK(sim->rmm().granule_state(pa) == state);
}

TEST_CASE("realm lifecycle guards") {
    auto sim = booted();
    std::uint64_t base = sim->config().layout.first_ram()->base;
    std::uint64_t rd = base;
    std::uint64_t rtt = base + kGranuleBytes;
    std::uint64_t rec = base + 2 * kGranuleBytes;

    for (std::uint64_t pa : {rd, rtt, rec})
        REQUIRE(sim->rmi(RmiCommand{RmiKind::GranuleDelegate, pa}).status == RmiStatus::Success);

    RmiCommand create{RmiKind::RealmCreate};
    create.rd = rd;
    create.rtt = rtt;
    create.ipa_width = 33;
    REQUIRE(sim->rmi(create).status == RmiStatus::Success);
    CHECK(sim->rmm().granule_state(rd) == GranuleState::Rd);
    CHECK(sim->rmm().granule_state(rtt) == GranuleState::Rtt);
    CHECK(sim->rmm().realm_by_rd(rd)->cntpoff == 0);

    RmiCommand rec_create{RmiKind::RecCreate};
    rec_create.rd = rd;
    rec_create.pa = rec;
    REQUIRE(sim->rmi(rec_create).status == RmiStatus::Success);

    // entering a realm that is still New is refused
    RmiCommand enter{RmiKind::RecEnter};
    enter.pa = rec;
    CHECK(sim->rmi(enter).status == RmiStatus::RealmNotActive);
    CHECK(sim->rmm().realm_by_rd(rd)->state == RealmState::New);

    RmiCommand activate{RmiKind::RealmActivate};
    activate.rd = rd;
    REQUIRE(sim->rmi(activate).status == RmiStatus::Success);
    CHECK(sim->rmi(activate).status == RmiStatus::RealmNotNew);  // second activate
    CHECK(sim->rmi(enter).status == RmiStatus::Success);

    // rec creation after activation is refused, state unchanged
    RmiCommand late_rec{RmiKind::RecCreate};
    late_rec.rd = rd;
    late_rec.pa = base + 3 * kGranuleBytes;
    REQUIRE(sim->rmi(RmiCommand{RmiKind::GranuleDelegate, late_rec.pa}).status ==
            RmiStatus::Success);
    CHECK(sim->rmi(late_rec).status == RmiStatus::RealmNotNew);
    CHECK(sim->rmm().granule_state(late_rec.pa) == GranuleState::Delegated);

    // undelegating an in-use granule is an illegal edge
    CHECK(sim->rmi(RmiCommand{RmiKind::GranuleUndelegate, rd}).status ==
          RmiStatus::IllegalGranuleTransition);

    // cntpoff stays put across the realm's lifetime
    std::uint64_t realm_id = sim->rmm().realm_by_rd(rd)->realm_id;
    RmiCommand destroy{RmiKind::RealmDestroy};
    destroy.rd = rd;
    REQUIRE(sim->rmi(destroy).status == RmiStatus::Success);
    CHECK(sim->rmm().realm_by_id(realm_id)->cntpoff == 0);
    CHECK(sim->rmm().realm_by_id(realm_id)->state == RealmState::Destroyed);
    CHECK(sim->rmm().granule_state(rd) == GranuleState::Delegated);  // freed, still delegated
    CHECK(sim->rmi(destroy).status == RmiStatus::BadParameters);     // rd no longer names a realm

    // the freed rd granule is reusable for a fresh realm
    REQUIRE(sim->rmi(create).status == RmiStatus::Success);
    CHECK(sim->rmm().realm_by_rd(rd)->realm_id != realm_id);
    CHECK(sim->rmm().realm_by_rd(rd)->state == RealmState::New);
}

TEST_CASE("realm create parameter validation") {
    auto sim = booted();
    std::uint64_t base = sim->config().layout.first_ram()->base;
    REQUIRE(sim->rmi(RmiCommand{RmiKind::GranuleDelegate, base}).status == RmiStatus::Success);

    RmiCommand same{RmiKind::RealmCreate};
    same.rd = base;
    same.rtt = base;  // rd == rtt
    same.ipa_width = 33;
    CHECK(sim->rmi(same).status == RmiStatus::BadParameters);

    RmiCommand bad_width{RmiKind::RealmCreate};
    bad_width.rd = base;
    bad_width.rtt = base + kGranuleBytes;
    bad_width.ipa_width = 9;
    CHECK(sim->rmi(bad_width).status == RmiStatus::BadParameters);

    RmiCommand undelegated_rtt{RmiKind::RealmCreate};
    undelegated_rtt.rd = base;
    undelegated_rtt.rtt = base + kGranuleBytes;  // never delegated
    undelegated_rtt.ipa_width = 33;
    CHECK(sim->rmi(undelegated_rtt).status == RmiStatus::IllegalGranuleTransition);
}

TEST_CASE("RSI is partitioned by caller world") {
    auto sim = booted();

    // from the normal world the interface does not exist
    CHECK(sim->rsi_version(0).status == RsiStatus::WrongWorld);

    sim->monitor().enter_el3(0);
    sim->monitor().world_switch(0, World::Realm);
    sim->monitor().exit_el3(0);
    RsiResult r = sim->rsi_version(0);
    CHECK(r.status == RsiStatus::Success);
    CHECK(r.version_major == kRsiVersionMajor);
    CHECK(r.version_minor == kRsiVersionMinor);

    CHECK(sim->rsi_raw(0, 0xdeadbeef).status == RsiStatus::UnknownCommand);
}

TEST_CASE("stage-2 mappings follow the FWB story") {
    SUBCASE("with FWB the attributes are forced to write-back") {
        auto sim = booted_fvp();
        CvmBootReport boot = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
        REQUIRE(boot.completed);
        const Simulator::Cvm* cvm = sim->cvm(boot.cvm_id);
        REQUIRE_FALSE(
            sim->rmm().stage2_map(cvm->rd, 0, cvm->ram_base, Cacheability::NonCacheable).has_value());
        const Stage2Entry* entry = sim->rmm().stage2_lookup(cvm->rd, 0);
        REQUIRE(entry != nullptr);
        CHECK(entry->attrs.fwb_forced);
        CHECK(entry->attrs.cacheability == Cacheability::WriteBack);
        CHECK(sim->rmm().stage2_pending_maintenance(cvm->rd) == 0);
    }

    SUBCASE("without FWB the mitigation rewrites attributes and drains maintenance") {
        auto sim = booted();
        CvmBootReport boot = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
        REQUIRE(boot.completed);
        const Simulator::Cvm* cvm = sim->cvm(boot.cvm_id);
        REQUIRE_FALSE(
            sim->rmm().stage2_map(cvm->rd, 0, cvm->ram_base, Cacheability::NonCacheable).has_value());
        const Stage2Entry* entry = sim->rmm().stage2_lookup(cvm->rd, 0);
        CHECK_FALSE(entry->attrs.fwb_forced);
        CHECK(entry->attrs.cacheability == Cacheability::WriteBack);  // attributes changed
        CHECK(sim->rmm().stage2_pending_maintenance(cvm->rd) == 0);   // drained before return
    }

    SUBCASE("granules owned by another realm are refused") {
        auto sim = booted();
        CvmBootReport first = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
        CvmBootReport second = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
        REQUIRE(first.completed);
        REQUIRE(second.completed);
        const Simulator::Cvm* a = sim->cvm(first.cvm_id);
        const Simulator::Cvm* b = sim->cvm(second.cvm_id);
        REQUIRE_FALSE(
            sim->rmm().stage2_map(a->rd, 0, a->ram_base, Cacheability::WriteBack).has_value());
        auto err = sim->rmm().stage2_map(b->rd, 0, a->ram_base, Cacheability::WriteBack);
        REQUIRE(err.has_value());
        CHECK(*err == Stage2Error::NotOwnedGranule);
    }
}

TEST_CASE("cross-world visibility of guest writes") {
    auto probe = [](std::unique_ptr<Simulator> sim, bool expect_stale) {
        CvmBootReport boot = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
        REQUIRE(boot.completed);
        const Simulator::Cvm* cvm = sim->cvm(boot.cvm_id);
        REQUIRE_FALSE(
            sim->rmm().stage2_map(cvm->rd, 0, cvm->ram_base, Cacheability::NonCacheable).has_value());
        REQUIRE_FALSE(sim->rmm().guest_write(cvm->rd, 0, 0x1111).has_value());
        REQUIRE_FALSE(sim->rmm().guest_write(cvm->rd, 0, 0x2222).has_value());

        // the guest always reads its own latest write
        CHECK(std::get<std::uint64_t>(sim->rmm().memory_read_visible(World::Realm, cvm->ram_base)) ==
              0x2222);
        auto seen =
            std::get<std::uint64_t>(sim->rmm().memory_read_visible(World::Normal, cvm->ram_base));
        if (expect_stale) {
            CHECK(seen != 0x2222);  // stale committed value
        } else {
            CHECK(seen == 0x2222);
        }
    };

    SUBCASE("fvp-rme is coherent") { probe(booted_fvp(), false); }
    SUBCASE("rk3588 with maintenance is coherent") { probe(booted(), false); }
    SUBCASE("rk3588 without maintenance goes stale") {
        SimConfig config;
        config.rmm_flags.fwb_maintenance = false;
        probe(booted(std::move(config)), true);
    }
}

TEST_CASE("unmapped reads are rejected") {
    auto sim = booted();
    auto r = sim->rmm().memory_read_visible(World::Normal, 0x12345000);
    REQUIRE(std::holds_alternative<MemAccessError>(r));
    CHECK(std::get<MemAccessError>(r) == MemAccessError::Unmapped);
}

TEST_CASE("guest event traces load from JSON") {
    auto events = guest_events_from_json(R"([{"ev":"FpUse"},{"ev":"TimerFire"},{"ev":"Retire","n":10}])");
    REQUIRE(events.size() == 3);
    CHECK(events[0].kind == GuestEventKind::FpUse);
    CHECK(events[1].kind == GuestEventKind::TimerFire);
    CHECK(events[2].kind == GuestEventKind::Retire);
    CHECK(events[2].n == 10);

    auto reparsed = guest_events_from_json(guest_events_to_json(events));
    REQUIRE(reparsed.size() == events.size());
    CHECK(reparsed[2].n == 10);

    CHECK_THROWS(guest_events_from_json(R"([{"ev":"Explode"}])"));
}

TEST_CASE("FP trap and timer interplay") {
    std::vector<GuestEvent> round = {{GuestEventKind::FpUse, 0},
                                     {GuestEventKind::TimerFire, 0},
                                     {GuestEventKind::Retire, 10}};
    std::vector<GuestEvent> trace;
    for (int i = 0; i < 50; ++i) trace.insert(trace.end(), round.begin(), round.end());

    SUBCASE("without the fix the canonical trace makes no progress") {
        SimConfig config;
        config.rmm_flags.fp_timer_fix = false;
        auto sim = booted(std::move(config));
        CvmBootReport boot = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
        GuestRunReport run = sim->run_guest(boot.cvm_id, trace);
        REQUIRE(run.ok);
        CHECK(run.retired == 0);
        CHECK(run.injections == 50);
        CHECK(run.exit_histogram.at("fp_restore") == 50);
        CHECK(run.exit_histogram.at("timer") == 50);
    }

    SUBCASE("with the fix the guest retires everything") {
        auto sim = booted();
        CvmBootReport boot = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
        GuestRunReport run = sim->run_guest(boot.cvm_id, trace);
        REQUIRE(run.ok);
        CHECK(run.retired == 500);
    }

    SUBCASE("traces without FP use behave identically under both settings") {
        std::vector<GuestEvent> plain = {{GuestEventKind::TimerFire, 0},
                                         {GuestEventKind::Retire, 3},
                                         {GuestEventKind::Hvc, 0},
                                         {GuestEventKind::Retire, 4}};
        std::string reports[2];
        for (bool fix : {false, true}) {
            SimConfig config;
            config.rmm_flags.fp_timer_fix = fix;
            auto sim = booted(std::move(config));
            CvmBootReport boot = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
            reports[fix ? 1 : 0] = sim->run_guest(boot.cvm_id, plain).to_json();
        }
        CHECK(reports[0] == reports[1]);
    }

    SUBCASE("progress is unbounded under the fix") {
        auto sim = booted();
        CvmBootReport boot = sim->cvm_boot(CvmConfig{1ULL << 20, 1, 1.0});
        std::uint64_t last = 0;
        for (int chunk = 0; chunk < 4; ++chunk) {
            GuestRunReport run = sim->run_guest(boot.cvm_id, trace);
            REQUIRE(run.ok);
            CHECK(sim->rmm().rec_at(sim->cvm(boot.cvm_id)->rec_granules[0])->pc > last);
            last = sim->rmm().rec_at(sim->cvm(boot.cvm_id)->rec_granules[0])->pc;
        }
    }
}
