// SPDX-License-Identifier: Apache-2.0
//
// ccabench: scenario runner and verification front end for the CCA lifecycle
// cost simulator.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "ccasim/costs.hpp"
#include "ccasim/gpt.hpp"
#include "ccasim/scenario.hpp"
#include "ccasim/util.hpp"
#include "ccasim/verification.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitSimulationError = 1;
constexpr int kExitInvalidParams = 2;

int write_output(const std::string& text, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << text;
        return kExitOk;
    }
    std::ofstream out(out_path, std::ios::binary);
    if (!out) {
        std::cerr << "cannot open output file: " << out_path << "\n";
        return kExitSimulationError;
    }
    out << text;
    return kExitOk;
}

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Arm CCA lifecycle cost simulator and benchmark harness"};
    app.require_subcommand(1);

    // --- run -----------------------------------------------------------------
    auto* run = app.add_subcommand("run", "Run one benchmark scenario");
    std::string scenario_arg;
    std::string profile_arg = "rk3588";
    std::string backend_arg = "single";
    std::string ram_arg = "256M";
    std::string format_arg = "table";
    std::string out_path;
    std::string weights_path;
    std::uint32_t iterations = 100;
    std::uint64_t seed = 0;
    double lazy_fraction = 1.0;
    double noise_instr = 0.0;
    double noise_cycles = 0.0;
    bool no_fp_timer_fix = false;
    bool no_fwb_maintenance = false;
    run->add_option("--scenario", scenario_arg, "Scenario id (see `list`)")->required();
    run->add_option("--profile", profile_arg, "Board profile name (rk3588, fvp-rme) or profile config file");
    run->add_option("--backend", backend_arg, "Protection-table backend: single|two-gpt|shadow");
    run->add_option("--ram", ram_arg, "Guest RAM for cvm_boot (bytes or K/M/G suffix)");
    run->add_option("--iterations", iterations, "Iterations per scenario");
    run->add_option("--seed", seed, "Seed for the optional noise overlay");
    run->add_option("--format", format_arg, "Output format: table|json|csv");
    run->add_option("--out", out_path, "Write output to a file instead of stdout");
    run->add_option("--weights", weights_path, "Weight table JSON (defaults to the shipped table)");
    run->add_option("--lazy-fraction", lazy_fraction, "Share of guest RAM delegated eagerly at boot");
    run->add_option("--noise-instr", noise_instr, "Noise overlay stdev, instructions");
    run->add_option("--noise-cycles", noise_cycles, "Noise overlay stdev, cycles");
    run->add_flag("--no-fp-timer-fix", no_fp_timer_fix, "Disable the FP/timer masking workaround");
    run->add_flag("--no-fwb-maintenance", no_fwb_maintenance,
                  "Disable the stage-2 cache maintenance mitigation");

    // --- list ------------------------------------------------------------------
    auto* list = app.add_subcommand("list", "List runnable scenarios");

    // --- calibrate ---------------------------------------------------------------
    auto* cal = app.add_subcommand("calibrate", "Solve a weight table from measurement rows");
    std::string cal_from;
    std::string cal_out;
    cal->add_option("--from", cal_from, "Measurement rows (JSON)")->required();
    cal->add_option("--out", cal_out, "Write the solved weight table to a file");

    // --- verify -------------------------------------------------------------------
    auto* verify = app.add_subcommand("verify", "Run the regression gate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        (void)app.exit(e);
        return kExitInvalidParams;
    }

    if (list->parsed()) {
        for (ccasim::ScenarioId id : ccasim::all_scenarios())
            std::cout << ccasim::scenario_name(id) << "\n";
        return kExitOk;
    }

    if (verify->parsed()) {
        auto results = ccasim::run_acceptance();
        for (const auto& r : results) std::cout << ccasim::format_criterion_line(r) << "\n";
        return ccasim::all_passed(results) ? kExitOk : kExitSimulationError;
    }

    if (cal->parsed()) {
        auto text = read_file(cal_from);
        if (!text) {
            std::cerr << "cannot read " << cal_from << "\n";
            return kExitInvalidParams;
        }
        std::vector<ccasim::Measurement> rows;
        try {
            rows = ccasim::measurements_from_json(*text);
        } catch (const std::exception& e) {
            std::cerr << "bad measurement file: " << e.what() << "\n";
            return kExitInvalidParams;
        }
        auto tmpl = std::get<ccasim::GptTable>(
            ccasim::GptTable::build(ccasim::MemoryLayout::default_layout()));
        auto result = ccasim::calibrate(rows, tmpl.byte_size());
        if (!result.weights) {
            std::cerr << "calibration failed: UnderdeterminedSystem (" << result.detail << ")\n";
            return kExitInvalidParams;
        }
        for (const auto& residual : result.residuals) {
            double instr_err = residual.measured.instructions.is_zero()
                                   ? 0.0
                                   : (residual.predicted.instructions - residual.measured.instructions)
                                             .to_double() /
                                         residual.measured.instructions.to_double() * 100.0;
            std::fprintf(stderr, "residual %-28s measured=(%s,%s) predicted=(%s,%s) instr=%+.3f%%\n",
                         residual.label.c_str(),
                         residual.measured.instructions.to_decimal_string().c_str(),
                         residual.measured.cycles.to_decimal_string().c_str(),
                         residual.predicted.instructions.to_decimal_string().c_str(),
                         residual.predicted.cycles.to_decimal_string().c_str(), instr_err);
        }
        if (!result.detail.empty()) std::fprintf(stderr, "note: %s\n", result.detail.c_str());
        return write_output(result.weights->to_json(), cal_out);
    }

    // run
    ccasim::ScenarioParams params;
    auto id = ccasim::scenario_from_name(scenario_arg);
    if (!id) {
        std::cerr << "unknown scenario: " << scenario_arg << "\n";
        return kExitInvalidParams;
    }
    params.id = *id;
    params.profile = profile_arg;
    auto backend = ccasim::backend_kind_from_name(backend_arg);
    if (!backend) {
        std::cerr << "unknown backend: " << backend_arg << "\n";
        return kExitInvalidParams;
    }
    params.backend = *backend;
    auto ram = ccasim::parse_byte_size(ram_arg);
    if (!ram) {
        std::cerr << "bad ram size: " << ram_arg << "\n";
        return kExitInvalidParams;
    }
    params.ram_bytes = *ram;
    params.iterations = iterations;
    params.seed = seed;
    params.lazy_fraction = lazy_fraction;
    params.fp_timer_fix = !no_fp_timer_fix;
    params.fwb_maintenance = !no_fwb_maintenance;
    if (noise_instr > 0.0 || noise_cycles > 0.0)
        params.noise = ccasim::NoiseModel{0, noise_instr, noise_cycles};  // mixed with --seed
    auto format = ccasim::table_format_from_name(format_arg);
    if (!format) {
        std::cerr << "unknown format: " << format_arg << "\n";
        return kExitInvalidParams;
    }

    ccasim::CostWeights weights = ccasim::CostWeights::defaults();
    if (!weights_path.empty()) {
        auto text = read_file(weights_path);
        if (!text) {
            std::cerr << "cannot read " << weights_path << "\n";
            return kExitInvalidParams;
        }
        try {
            weights = ccasim::CostWeights::from_json(*text);
        } catch (const std::exception& e) {
            std::cerr << "bad weight table: " << e.what() << "\n";
            return kExitInvalidParams;
        }
    }

    auto outcome = ccasim::run_scenario(params, weights);
    if (outcome.error) {
        std::cerr << outcome.detail << "\n";
        return *outcome.error == ccasim::ScenarioError::InvalidParams ? kExitInvalidParams
                                                                      : kExitSimulationError;
    }
    auto emitted = ccasim::emit_table(outcome.rows, *format);
    return write_output(std::get<std::string>(emitted), out_path);
}
