// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ccasim/scenario.hpp"

using namespace ccasim;

namespace {

ScenarioParams quick(ScenarioId id, BackendKind backend = BackendKind::Single) {
    ScenarioParams params;
    params.id = id;
    params.backend = backend;
    params.iterations = 2;
    if (id == ScenarioId::CvmBoot) params.ram_bytes = 64ULL << 20;
    return params;
}

std::vector<ResultRow> rows_for(const ScenarioParams& params) {
    auto outcome = run_scenario(params, CostWeights::defaults());
    REQUIRE_FALSE(outcome.error.has_value());
    REQUIRE(outcome.rows.size() == 1);
    return outcome.rows;
}

}  // namespace

TEST_CASE("scenario table matches the measured rows") {
    struct Expected {
        ScenarioId id;
        BackendKind backend;
        std::int64_t instr;
        std::int64_t cycles;
    };
    const Expected expected[] = {
        {ScenarioId::SmcRt, BackendKind::Single, 182, 421},
        {ScenarioId::RmiRt, BackendKind::Single, 932, 3370},
        {ScenarioId::RmiVersion, BackendKind::Single, 994, 3583},
        {ScenarioId::RmiDelegate, BackendKind::Single, 2865, 7988},
        {ScenarioId::RmiDelegate, BackendKind::TwoGpt, 3488, 8654},
        {ScenarioId::ShadowGptCreate, BackendKind::Single, 50'860'000, 34'610'000},
    };
    for (const auto& e : expected) {
        auto rows = rows_for(quick(e.id, e.backend));
        CHECK(rows[0].mean_instructions == Ratio(e.instr));
        CHECK(rows[0].mean_cycles == Ratio(e.cycles));
        CHECK(rows[0].stdev_instructions == 0.0);
    }
}

TEST_CASE("boot rows are quoted in millions") {
    ScenarioParams params = quick(ScenarioId::CvmBoot);
    params.ram_bytes = 256ULL << 20;
    params.iterations = 1;
    auto rows = rows_for(params);
    CHECK(rows[0].scenario == "cvm_boot[ram=256M]");
    CHECK(rows[0].scale == 1'000'000);
    CHECK(rows[0].mean_instructions == Ratio(1'900'000'000));

    auto emitted = std::get<std::string>(emit_table(rows, TableFormat::Csv));
    CHECK(emitted.find("cvm_boot[ram=256M],single,1900,2647,0,0,1000000") != std::string::npos);
}

TEST_CASE("invalid parameters are rejected before simulation") {
    ScenarioParams zero_ram = quick(ScenarioId::CvmBoot);
    zero_ram.ram_bytes = 0;
    auto outcome = run_scenario(zero_ram, CostWeights::defaults());
    REQUIRE(outcome.error.has_value());
    CHECK(*outcome.error == ScenarioError::InvalidParams);
    CHECK(outcome.rows.empty());

    ScenarioParams bad_profile = quick(ScenarioId::SmcRt);
    bad_profile.profile = "juno-r2";
    outcome = run_scenario(bad_profile, CostWeights::defaults());
    REQUIRE(outcome.error.has_value());
    CHECK(*outcome.error == ScenarioError::InvalidParams);

    ScenarioParams no_iterations = quick(ScenarioId::SmcRt);
    no_iterations.iterations = 0;
    outcome = run_scenario(no_iterations, CostWeights::defaults());
    REQUIRE(outcome.error.has_value());
    CHECK(*outcome.error == ScenarioError::InvalidParams);
}

TEST_CASE("every listed scenario runs with defaults") {
    for (ScenarioId id : all_scenarios()) {
        ScenarioParams params = quick(id);
        params.iterations = 1;
        auto outcome = run_scenario(params, CostWeights::defaults());
        CHECK_FALSE(outcome.error.has_value());
        CHECK(outcome.rows.size() == 1);
    }
}

TEST_CASE("demo scenarios carry their findings in the notes") {
    ScenarioParams fp = quick(ScenarioId::FpTimerDemo);
    fp.iterations = 1;
    auto fp_rows = rows_for(fp);
    CHECK(fp_rows[0].notes.find("fix=off retired 0/10000") != std::string::npos);
    CHECK(fp_rows[0].notes.find("fix=on retired 10000/10000") != std::string::npos);

    ScenarioParams fwb = quick(ScenarioId::FwbDemo);
    fwb.iterations = 1;
    auto fwb_rows = rows_for(fwb);
    CHECK(fwb_rows[0].notes.find("maintenance=off stale 100/100") != std::string::npos);
    CHECK(fwb_rows[0].notes.find("maintenance=on stale 0/100") != std::string::npos);
}

TEST_CASE("csv output uses the fixed schema") {
    auto rows = rows_for(quick(ScenarioId::SmcRt));
    auto emitted = std::get<std::string>(emit_table(rows, TableFormat::Csv));
    CHECK(emitted.rfind("scenario,backend,mean_instr,mean_cycles,stdev_instr,stdev_cycles,scale\n",
                        0) == 0);
    CHECK(emitted.find("smc_rt,single,182,421,0,0,1\n") != std::string::npos);
}

TEST_CASE("json output round trips to identical rows") {
    auto rows = rows_for(quick(ScenarioId::RmiVersion));
    rows.push_back(rows_for(quick(ScenarioId::RmiDelegate, BackendKind::TwoGpt))[0]);
    auto emitted = std::get<std::string>(emit_table(rows, TableFormat::Json));
    std::vector<ResultRow> reparsed = rows_from_json(emitted);
    REQUIRE(reparsed.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) CHECK(reparsed[i] == rows[i]);
}

TEST_CASE("table output groups rows by backend") {
    auto rows = rows_for(quick(ScenarioId::RmiDelegate, BackendKind::Single));
    rows.push_back(rows_for(quick(ScenarioId::RmiDelegate, BackendKind::TwoGpt))[0]);
    auto emitted = std::get<std::string>(emit_table(rows, TableFormat::Table));
    auto single_at = emitted.find("== single ==");
    auto twogpt_at = emitted.find("== two-gpt ==");
    REQUIRE(single_at != std::string::npos);
    REQUIRE(twogpt_at != std::string::npos);
    CHECK(single_at < twogpt_at);
}

TEST_CASE("empty row sets are rejected") {
    auto emitted = emit_table({}, TableFormat::Csv);
    REQUIRE(std::holds_alternative<EmitError>(emitted));
    CHECK(std::get<EmitError>(emitted) == EmitError::EmptyRows);
}

TEST_CASE("compare reports the case-study overheads") {
    auto single = rows_for(quick(ScenarioId::RmiDelegate, BackendKind::Single));
    auto twogpt = rows_for(quick(ScenarioId::RmiDelegate, BackendKind::TwoGpt));
    auto result = compare(single, twogpt);
    REQUIRE(std::holds_alternative<std::vector<OverheadRow>>(result));
    const auto& row = std::get<std::vector<OverheadRow>>(result).front();
    CHECK(row.instructions_pct == doctest::Approx(21.7).epsilon(0.005));
    CHECK(row.cycles_pct == doctest::Approx(8.3).epsilon(0.01));

    SUBCASE("identical inputs give zero overhead") {
        auto zero = compare(single, single);
        const auto& zrow = std::get<std::vector<OverheadRow>>(zero).front();
        CHECK(zrow.instructions_pct == 0.0);
        CHECK(zrow.cycles_pct == 0.0);
    }

    SUBCASE("mismatched row sets are rejected") {
        auto renamed = twogpt;
        renamed[0].scenario = "something_else";
        auto bad = compare(single, renamed);
        REQUIRE(std::holds_alternative<CompareError>(bad));
        CHECK(std::get<CompareError>(bad) == CompareError::MismatchedRows);
    }
}

TEST_CASE("boot overhead comparison matches the reported percentages") {
    ScenarioParams single = quick(ScenarioId::CvmBoot);
    single.ram_bytes = 1ULL << 30;
    single.iterations = 1;
    ScenarioParams twogpt = single;
    twogpt.backend = BackendKind::TwoGpt;
    auto result = compare(rows_for(single), rows_for(twogpt));
    const auto& row = std::get<std::vector<OverheadRow>>(result).front();
    CHECK(std::fabs(row.instructions_pct - 1.19) <= 0.05);
    CHECK(std::fabs(row.cycles_pct - 1.15) <= 0.05);
}

TEST_CASE("identical seeds give byte-identical output") {
    ScenarioParams params = quick(ScenarioId::RmiDelegate);
    params.seed = 99;
    params.noise = NoiseModel{0, 12.0, 30.0};
    params.iterations = 16;

    auto first = run_scenario(params, CostWeights::defaults());
    auto second = run_scenario(params, CostWeights::defaults());
    auto a = std::get<std::string>(emit_table(first.rows, TableFormat::Json));
    auto b = std::get<std::string>(emit_table(second.rows, TableFormat::Json));
    CHECK(a == b);

    params.seed = 100;  // a different seed must actually change the jitter
    auto third = run_scenario(params, CostWeights::defaults());
    CHECK(std::get<std::string>(emit_table(third.rows, TableFormat::Json)) != a);
}
