// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ccasim/costs.hpp"
#include "ccasim/gpt.hpp"

namespace ccasim {

enum class ScenarioId : std::uint8_t {
    SmcRt,
    RmiRt,
    RmiVersion,
    RmiDelegate,
    CvmBoot,
    ShadowGptCreate,
    FpTimerDemo,
    FwbDemo,
};

std::string_view scenario_name(ScenarioId id);
std::optional<ScenarioId> scenario_from_name(std::string_view name);
std::vector<ScenarioId> all_scenarios();

struct ScenarioParams {
    ScenarioId id = ScenarioId::SmcRt;
    std::string profile = "rk3588";
    BackendKind backend = BackendKind::Single;
    std::uint64_t ram_bytes = 256ULL << 20;  // cvm_boot only
    double lazy_fraction = 1.0;              // share of guest RAM delegated eagerly
    std::uint32_t iterations = 100;
    std::uint64_t seed = 0;
    std::optional<NoiseModel> noise;  // off by default; all shipped runs are exact
    bool fp_timer_fix = true;
    bool fwb_maintenance = true;
};

/// One output row in the layout of the measurement tables this harness
/// mirrors: means and standard deviations for both counters plus the scale
/// unit the row is quoted in.
struct ResultRow {
    std::string scenario;  // scenario id, parameterized ids carry a suffix such as [ram=1G]
    std::string backend;
    Ratio mean_instructions;
    Ratio mean_cycles;
    double stdev_instructions = 0.0;
    double stdev_cycles = 0.0;
    std::int64_t scale = 1;
    std::string notes;

    bool operator==(const ResultRow& o) const {
        return scenario == o.scenario && backend == o.backend &&
               mean_instructions == o.mean_instructions && mean_cycles == o.mean_cycles &&
               stdev_instructions == o.stdev_instructions && stdev_cycles == o.stdev_cycles &&
               scale == o.scale && notes == o.notes;
    }
};

enum class ScenarioError : std::uint8_t { InvalidParams, SimulationError };

struct ScenarioOutcome {
    std::vector<ResultRow> rows;
    std::optional<ScenarioError> error;
    std::string detail;
};

ScenarioOutcome run_scenario(const ScenarioParams& params, const CostWeights& weights);

enum class TableFormat : std::uint8_t { Table, Json, Csv };

std::optional<TableFormat> table_format_from_name(std::string_view name);

enum class EmitError : std::uint8_t { EmptyRows };

std::variant<std::string, EmitError> emit_table(const std::vector<ResultRow>& rows,
                                                TableFormat format);

std::vector<ResultRow> rows_from_json(const std::string& text);

enum class CompareError : std::uint8_t { MismatchedRows };

struct OverheadRow {
    std::string scenario;
    double instructions_pct = 0.0;  // rounded for display only
    double cycles_pct = 0.0;
};

std::variant<std::vector<OverheadRow>, CompareError> compare(const std::vector<ResultRow>& base,
                                                             const std::vector<ResultRow>& other);

std::string overheads_to_string(const std::vector<OverheadRow>& rows);

}  // namespace ccasim
