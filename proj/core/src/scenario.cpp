// SPDX-License-Identifier: Apache-2.0
#include "ccasim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "ccasim/sim.hpp"
#include "ccasim/util.hpp"

namespace ccasim {

using json = nlohmann::ordered_json;

namespace {

struct ScenarioName {
    ScenarioId id;
    std::string_view name;
};

constexpr ScenarioName kScenarioNames[] = {
    {ScenarioId::SmcRt, "smc_rt"},
    {ScenarioId::RmiRt, "rmi_rt"},
    {ScenarioId::RmiVersion, "rmi_version"},
    {ScenarioId::RmiDelegate, "rmi_delegate"},
    {ScenarioId::CvmBoot, "cvm_boot"},
    {ScenarioId::ShadowGptCreate, "shadow_gpt_create"},
    {ScenarioId::FpTimerDemo, "fp_timer_demo"},
    {ScenarioId::FwbDemo, "fwb_demo"},
};

std::string format_double(double v) {
    if (v == 0.0) return "0";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

/// Scaled mean for display: exact division by the row scale.
std::string format_mean(const Ratio& mean, std::int64_t scale) {
    return (mean / Ratio(scale)).to_decimal_string();
}

std::string format_stdev(double stdev, std::int64_t scale) {
    return format_double(stdev / static_cast<double>(scale));
}

}  // namespace

std::string_view scenario_name(ScenarioId id) {
    for (const auto& e : kScenarioNames)
        if (e.id == id) return e.name;
    return "?";
}

std::optional<ScenarioId> scenario_from_name(std::string_view name) {
    for (const auto& e : kScenarioNames)
        if (e.name == name) return e.id;
    return std::nullopt;
}

std::vector<ScenarioId> all_scenarios() {
    std::vector<ScenarioId> ids;
    for (const auto& e : kScenarioNames) ids.push_back(e.id);
    return ids;
}

std::optional<TableFormat> table_format_from_name(std::string_view name) {
    if (name == "table") return TableFormat::Table;
    if (name == "json") return TableFormat::Json;
    if (name == "csv") return TableFormat::Csv;
    return std::nullopt;
}

namespace {

/// Built-in name first, then a profile config file path.
std::optional<BoardProfile> resolve_profile(const std::string& name_or_path) {
    if (auto builtin = BoardProfile::builtin(name_or_path)) return builtin;
    std::ifstream in(name_or_path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return BoardProfile::from_json(ss.str());
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::unique_ptr<Simulator> make_simulator(const ScenarioParams& params,
                                           const CostWeights& weights, std::string& error,
                                           bool fwb_maintenance_override,
                                           bool fp_timer_fix_override) {
    auto profile = resolve_profile(params.profile);
    if (!profile) {
        error = "unknown profile: " + params.profile;
        return nullptr;
    }
    SimConfig config;
    config.profile = *profile;
    config.backend = params.backend;
    config.rmm_flags.fwb_maintenance = fwb_maintenance_override;
    config.rmm_flags.fp_timer_fix = fp_timer_fix_override;
    auto sim = std::make_unique<Simulator>(std::move(config), weights);
    auto boot = sim->boot_system();
    if (std::holds_alternative<GptError>(boot)) {
        error = std::string("system boot failed: ") +
                std::string(gpt_error_name(std::get<GptError>(boot)));
        return nullptr;
    }
    return sim;
}

std::optional<ScenarioError> validate(const ScenarioParams& params, std::string& detail) {
    if (params.iterations == 0) {
        detail = "iterations must be at least 1";
        return ScenarioError::InvalidParams;
    }
    if (!resolve_profile(params.profile)) {
        detail = "unknown profile: " + params.profile;
        return ScenarioError::InvalidParams;
    }
    if (params.id == ScenarioId::CvmBoot) {
        if (params.ram_bytes == 0 || params.ram_bytes % kGranuleBytes != 0) {
            detail = "ram size must be a nonzero multiple of 4096";
            return ScenarioError::InvalidParams;
        }
        if (params.lazy_fraction < 0.0 || params.lazy_fraction > 1.0) {
            detail = "lazy fraction must be within [0, 1]";
            return ScenarioError::InvalidParams;
        }
        const MemoryRegion* ram = MemoryLayout::default_layout().first_ram();
        if (params.ram_bytes + 64 * kGranuleBytes > ram->size) {
            detail = "ram size exceeds the RAM region";
            return ScenarioError::InvalidParams;
        }
    }
    return std::nullopt;
}

struct IterationResult {
    CostDelta cost;
    std::string notes;
};

std::variant<IterationResult, std::string> run_iteration(const ScenarioParams& params,
                                                         const CostWeights& weights) {
    std::string error;
    IterationResult out;

    switch (params.id) {
        case ScenarioId::SmcRt: {
            auto sim = make_simulator(params, weights, error, true, true);
            if (!sim) return error;
            LedgerMark mark(sim->ledger());
            sim->smc(0, SmcCall{kSmcNoopFid, {}});
            out.cost = mark.delta();
            return out;
        }
        case ScenarioId::RmiRt: {
            auto sim = make_simulator(params, weights, error, true, true);
            if (!sim) return error;
            LedgerMark mark(sim->ledger());
            RmiResult r = sim->rmi(RmiCommand{RmiKind::RoundTrip});
            if (r.status != RmiStatus::Success) return std::string("rmi round trip failed");
            out.cost = mark.delta();
            return out;
        }
        case ScenarioId::RmiVersion: {
            auto sim = make_simulator(params, weights, error, true, true);
            if (!sim) return error;
            LedgerMark mark(sim->ledger());
            RmiResult r = sim->rmi(RmiCommand{RmiKind::Version});
            if (r.status != RmiStatus::Success) return std::string("rmi version failed");
            out.cost = mark.delta();
            return out;
        }
        case ScenarioId::RmiDelegate: {
            auto sim = make_simulator(params, weights, error, true, true);
            if (!sim) return error;
            std::uint64_t pa = sim->config().layout.first_ram()->base;
            LedgerMark mark(sim->ledger());
            RmiResult r = sim->rmi(RmiCommand{RmiKind::GranuleDelegate, pa});
            if (r.status != RmiStatus::Success) return std::string("delegate failed");
            out.cost = mark.delta();
            return out;
        }
        case ScenarioId::CvmBoot: {
            auto sim = make_simulator(params, weights, error, true, true);
            if (!sim) return error;
            CvmBootReport report =
                sim->cvm_boot(CvmConfig{params.ram_bytes, 1, params.lazy_fraction});
            if (!report.completed) return "cvm boot failed: " + report.error;
            out.cost = report.total;
            return out;
        }
        case ScenarioId::ShadowGptCreate: {
            auto sim = make_simulator(params, weights, error, true, true);
            if (!sim) return error;
            out.cost = sim->create_shadow_gpt().cost;
            return out;
        }
        case ScenarioId::FpTimerDemo: {
            // Canonical interplay trace, run with the workaround off and on.
            std::vector<GuestEvent> round = {{GuestEventKind::FpUse, 0},
                                             {GuestEventKind::TimerFire, 0},
                                             {GuestEventKind::Retire, 10}};
            std::vector<GuestEvent> trace;
            for (int i = 0; i < 1000; ++i)
                trace.insert(trace.end(), round.begin(), round.end());

            std::uint64_t retired_off = 0;
            std::uint64_t retired_on = 0;
            CostDelta fixed_cost;
            for (bool fix : {false, true}) {
                auto sim = make_simulator(params, weights, error, true, fix);
                if (!sim) return error;
                CvmBootReport boot = sim->cvm_boot(CvmConfig{16ULL << 20, 1, 1.0});
                if (!boot.completed) return "cvm boot failed: " + boot.error;
                GuestRunReport run = sim->run_guest(boot.cvm_id, trace);
                if (!run.ok) return "guest run failed: " + run.error;
                (fix ? retired_on : retired_off) = run.retired;
                if (fix) fixed_cost = run.cost;
            }
            out.cost = fixed_cost;
            out.notes = "fix=off retired " + std::to_string(retired_off) + "/10000; fix=on retired " +
                        std::to_string(retired_on) + "/10000";
            return out;
        }
        case ScenarioId::FwbDemo: {
            constexpr int kProbes = 100;
            int stale_unmitigated = 0;
            int stale_mitigated = 0;
            CostDelta mitigated_cost;
            for (bool maintenance : {false, true}) {
                auto sim = make_simulator(params, weights, error, maintenance, true);
                if (!sim) return error;
                CvmBootReport boot = sim->cvm_boot(CvmConfig{16ULL << 20, 1, 1.0});
                if (!boot.completed) return "cvm boot failed: " + boot.error;
                const Simulator::Cvm* cvm = sim->cvm(boot.cvm_id);
                LedgerMark mark(sim->ledger());
                int stale = 0;
                for (int i = 0; i < kProbes; ++i) {
                    std::uint64_t ipa = static_cast<std::uint64_t>(i) * kGranuleBytes;
                    std::uint64_t pa = cvm->ram_base + ipa;
                    if (sim->rmm().stage2_map(cvm->rd, ipa, pa, Cacheability::NonCacheable))
                        return std::string("stage2 map failed");
                    std::uint64_t value = 0xC0DE0000ULL + static_cast<std::uint64_t>(i);
                    if (sim->rmm().guest_write(cvm->rd, ipa, value))
                        return std::string("guest write failed");
                    auto seen = sim->rmm().memory_read_visible(World::Normal, pa);
                    if (std::get<std::uint64_t>(seen) != value) ++stale;
                }
                (maintenance ? stale_mitigated : stale_unmitigated) = stale;
                if (maintenance) mitigated_cost = mark.delta();
            }
            out.cost = mitigated_cost;
            out.notes = "maintenance=off stale " + std::to_string(stale_unmitigated) + "/" +
                        std::to_string(kProbes) + "; maintenance=on stale " +
                        std::to_string(stale_mitigated) + "/" + std::to_string(kProbes);
            return out;
        }
    }
    return std::string("unknown scenario");
}

}  // namespace

ScenarioOutcome run_scenario(const ScenarioParams& params, const CostWeights& weights) {
    ScenarioOutcome outcome;
    if (auto err = validate(params, outcome.detail)) {
        outcome.error = err;
        return outcome;
    }

    std::vector<CostDelta> samples;
    samples.reserve(params.iterations);
    std::string notes;
    for (std::uint32_t i = 0; i < params.iterations; ++i) {
        auto r = run_iteration(params, weights);
        if (std::holds_alternative<std::string>(r)) {
            outcome.error = ScenarioError::SimulationError;
            outcome.detail = std::get<std::string>(r);
            outcome.rows.clear();  // partial results suppressed
            return outcome;
        }
        samples.push_back(std::get<IterationResult>(r).cost);
        notes = std::get<IterationResult>(r).notes;
    }

    std::int64_t scale = params.id == ScenarioId::CvmBoot ? 1'000'000 : 1;
    std::optional<NoiseModel> noise = params.noise;
    if (noise) noise->seed = noise->seed ^ params.seed;
    auto summary = summarize(samples, noise, scale);

    ResultRow row;
    row.scenario = std::string(scenario_name(params.id));
    if (params.id == ScenarioId::CvmBoot)
        row.scenario += "[ram=" + format_byte_size(params.ram_bytes) + "]";
    row.backend = std::string(backend_kind_name(params.backend));
    row.mean_instructions = summary.summary->mean_instructions;
    row.mean_cycles = summary.summary->mean_cycles;
    row.stdev_instructions = summary.summary->stdev_instructions;
    row.stdev_cycles = summary.summary->stdev_cycles;
    row.scale = scale;
    row.notes = notes;
    outcome.rows.push_back(std::move(row));
    return outcome;
}

namespace {

json ratio_json(const Ratio& r) {
    if (r.is_integer()) return json(r.numerator());
    return json{{"num", r.numerator()}, {"den", r.denominator()}};
}

Ratio ratio_from(const json& j) {
    if (j.is_number_integer()) return Ratio(j.get<std::int64_t>());
    return Ratio(j.at("num").get<std::int64_t>(), j.at("den").get<std::int64_t>());
}

}  // namespace

std::variant<std::string, EmitError> emit_table(const std::vector<ResultRow>& rows,
                                                TableFormat format) {
    if (rows.empty()) return EmitError::EmptyRows;

    if (format == TableFormat::Csv) {
        std::string out =
            "scenario,backend,mean_instr,mean_cycles,stdev_instr,stdev_cycles,scale\n";
        for (const auto& r : rows) {
            out += r.scenario + "," + r.backend + "," + format_mean(r.mean_instructions, r.scale) +
                   "," + format_mean(r.mean_cycles, r.scale) + "," +
                   format_stdev(r.stdev_instructions, r.scale) + "," +
                   format_stdev(r.stdev_cycles, r.scale) + "," + std::to_string(r.scale) + "\n";
        }
        return out;
    }

    if (format == TableFormat::Json) {
        json out = json::array();
        for (const auto& r : rows) {
            json row{{"scenario", r.scenario},
                     {"backend", r.backend},
                     {"mean_instr", ratio_json(r.mean_instructions)},
                     {"mean_cycles", ratio_json(r.mean_cycles)},
                     {"stdev_instr", r.stdev_instructions},
                     {"stdev_cycles", r.stdev_cycles},
                     {"scale", r.scale}};
            if (!r.notes.empty()) row["notes"] = r.notes;
            out.push_back(std::move(row));
        }
        return out.dump(2) + "\n";
    }

    // Plain table, one section per backend in first-appearance order.
    std::vector<std::string> backends;
    for (const auto& r : rows)
        if (std::find(backends.begin(), backends.end(), r.backend) == backends.end())
            backends.push_back(r.backend);

    char line[256];
    std::string out;
    std::snprintf(line, sizeof(line), "%-28s %14s %14s %12s %12s %8s\n", "benchmark", "mean_instr",
                  "mean_cycles", "stdev_instr", "stdev_cycles", "scale");
    out += line;
    for (const auto& backend : backends) {
        out += "== " + backend + " ==\n";
        for (const auto& r : rows) {
            if (r.backend != backend) continue;
            std::snprintf(line, sizeof(line), "%-28s %14s %14s %12s %12s %8lld\n",
                          r.scenario.c_str(), format_mean(r.mean_instructions, r.scale).c_str(),
                          format_mean(r.mean_cycles, r.scale).c_str(),
                          format_stdev(r.stdev_instructions, r.scale).c_str(),
                          format_stdev(r.stdev_cycles, r.scale).c_str(),
                          static_cast<long long>(r.scale));
            out += line;
            if (!r.notes.empty()) out += "    note: " + r.notes + "\n";
        }
    }
    return out;
}

std::vector<ResultRow> rows_from_json(const std::string& text) {
    json in = json::parse(text);
    std::vector<ResultRow> rows;
    for (const auto& j : in) {
        ResultRow r;
        r.scenario = j.at("scenario").get<std::string>();
        r.backend = j.at("backend").get<std::string>();
        r.mean_instructions = ratio_from(j.at("mean_instr"));
        r.mean_cycles = ratio_from(j.at("mean_cycles"));
        r.stdev_instructions = j.at("stdev_instr").get<double>();
        r.stdev_cycles = j.at("stdev_cycles").get<double>();
        r.scale = j.at("scale").get<std::int64_t>();
        r.notes = j.value("notes", "");
        rows.push_back(std::move(r));
    }
    return rows;
}

std::variant<std::vector<OverheadRow>, CompareError> compare(const std::vector<ResultRow>& base,
                                                             const std::vector<ResultRow>& other) {
    if (base.size() != other.size() || base.empty()) return CompareError::MismatchedRows;
    std::vector<OverheadRow> out;
    for (std::size_t i = 0; i < base.size(); ++i) {
        const ResultRow& a = base[i];
        const ResultRow* b = nullptr;
        for (const auto& candidate : other) {
            if (candidate.scenario == a.scenario) {
                b = &candidate;
                break;
            }
        }
        if (!b || a.mean_instructions.is_zero() || a.mean_cycles.is_zero())
            return CompareError::MismatchedRows;
        // Percentages come from the unrounded means; rounding happens at
        // display time.
        OverheadRow row;
        row.scenario = a.scenario;
        row.instructions_pct =
            ((b->mean_instructions - a.mean_instructions) / a.mean_instructions).to_double() * 100.0;
        row.cycles_pct = ((b->mean_cycles - a.mean_cycles) / a.mean_cycles).to_double() * 100.0;
        out.push_back(std::move(row));
    }
    return out;
}

std::string overheads_to_string(const std::vector<OverheadRow>& rows) {
    std::string out;
    char line[160];
    for (const auto& r : rows) {
        std::snprintf(line, sizeof(line), "%-28s %+.2f%% instructions  %+.2f%% cycles\n",
                      r.scenario.c_str(), r.instructions_pct, r.cycles_pct);
        out += line;
    }
    return out;
}

}  // namespace ccasim
