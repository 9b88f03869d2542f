// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ccasim/ratio.hpp"

namespace ccasim {

enum class World : std::uint8_t { Normal = 0, Secure = 1, Realm = 2, Root = 3 };

constexpr std::array<World, 4> kAllWorlds = {World::Normal, World::Secure, World::Realm, World::Root};

std::string_view world_name(World w);

/// One (instructions, cycles) pair. Weights and accumulated charges share
/// this shape; both stay exact rationals until a report is emitted.
struct CostDelta {
    Ratio instructions;
    Ratio cycles;

    CostDelta& operator+=(const CostDelta& o) {
        instructions += o.instructions;
        cycles += o.cycles;
        return *this;
    }
    CostDelta operator+(const CostDelta& o) const {
        CostDelta r = *this;
        r += o;
        return r;
    }
    CostDelta operator-(const CostDelta& o) const {
        return CostDelta{instructions - o.instructions, cycles - o.cycles};
    }
    CostDelta operator*(std::int64_t k) const { return CostDelta{instructions * k, cycles * k}; }
    bool operator==(const CostDelta& o) const = default;
    bool is_zero() const { return instructions.is_zero() && cycles.is_zero(); }
};

/// Primitives the simulator charges. The ids double as the keys of the
/// weight-table JSON format.
enum class CostPrimitive : std::uint8_t {
    SmcRt,                     // EL3 round trip, context saved and restored, no service
    NseLookup,                 // per-EL3-entry read of the software world bit from context memory
    WorldSwitch,               // EL3 context switch to a different world
    TlbFullFlush,              // whole-TLB invalidation standing in for TLBI PAALLOS
    RmiRt,                     // full measured RMI round trip (reference row; not charged on the path)
    RmiDispatch,               // RMM-side entry/decode/return on top of SMC + world switches
    RmiHandlerVersion,
    RmiHandlerRealmCreate,
    RmiHandlerRealmActivate,
    RmiHandlerRealmDestroy,
    RmiHandlerRecCreate,
    RmiHandlerRecEnter,
    RsiHandlerVersion,
    DelegateStandalone,        // GRANULE_(UN)DELEGATE handler weight on the standalone RMI path
    DelegateBootPath,          // per-granule marginal cost of the boot-time delegation loop
    TwoGptExtraPerDelegate,    // second-table update on the standalone delegate path
    TwoGptBootConstant,        // per-boot constant of the two-GPT case study
    TwoGptBootPerGranule,      // per-granule two-GPT boot term (zero after clamping on Table-5 data)
    GptBuildPerTable,
    GptCopyPerByte,
    GptSetPerGranule,
    Stage2MaintenancePerGranule,
    BootBase,                  // host-side CVM boot work outside the modeled RMI calls
};

constexpr std::size_t kCostPrimitiveCount = static_cast<std::size_t>(CostPrimitive::BootBase) + 1;

std::string_view cost_primitive_name(CostPrimitive p);
std::optional<CostPrimitive> cost_primitive_from_name(std::string_view name);

/// Per-primitive instruction/cycle weights.
class CostWeights {
public:
    CostWeights();  // all zero

    /// Weight table whose simulated scenarios reproduce the shipped
    /// measurement set exactly (see data/measurements.json).
    static CostWeights defaults();

    const CostDelta& get(CostPrimitive p) const { return table_[static_cast<std::size_t>(p)]; }
    void set(CostPrimitive p, CostDelta w) { table_[static_cast<std::size_t>(p)] = std::move(w); }

    bool operator==(const CostWeights& o) const = default;

    std::string to_json() const;
    static CostWeights from_json(const std::string& text);

private:
    std::array<CostDelta, kCostPrimitiveCount> table_;
};

enum class LedgerError : std::uint8_t { UnknownPrimitive };

/// Cross-world performance-counter ledger. Per-world counters are always
/// maintained; `cross_world` selects whether scenario readings come from the
/// global counter (save/restore of PMU state bypassed across worlds) or stop
/// at world boundaries.
class PmuLedger {
public:
    explicit PmuLedger(const CostWeights& weights, bool cross_world = true)
        : weights_(&weights), cross_world_(cross_world) {}

    CostDelta charge(World world, CostPrimitive primitive, std::int64_t multiplier = 1);
    /// String-keyed variant used by external callers; unknown ids are
    /// reported instead of asserted.
    std::optional<LedgerError> charge_by_name(World world, std::string_view primitive,
                                              std::int64_t multiplier = 1);

    bool cross_world() const { return cross_world_; }
    const CostDelta& global() const { return global_; }
    const CostDelta& per_world(World w) const { return per_world_[static_cast<std::size_t>(w)]; }

    /// Sum of all per-world counters; equals global() by construction.
    CostDelta world_sum() const;

    std::uint64_t full_flush_count() const { return full_flush_count_; }

private:
    const CostWeights* weights_;
    bool cross_world_;
    CostDelta global_;
    std::array<CostDelta, 4> per_world_;
    std::uint64_t full_flush_count_ = 0;
};

/// Snapshot/delta helper for measuring one operation or scenario iteration.
class LedgerMark {
public:
    explicit LedgerMark(const PmuLedger& ledger) : ledger_(&ledger), start_(ledger.global()) {}
    CostDelta delta() const { return ledger_->global() - start_; }

private:
    const PmuLedger* ledger_;
    CostDelta start_;
};

struct StatSummary {
    Ratio mean_instructions;
    Ratio mean_cycles;
    double stdev_instructions = 0.0;
    double stdev_cycles = 0.0;
    std::size_t count = 0;
    std::int64_t scale = 1;
};

/// Optional seeded jitter overlay. Absolute target standard deviations; the
/// per-sample multiplicative factors come from a hand-rolled Box-Muller so
/// results do not depend on the standard library's distributions.
struct NoiseModel {
    std::uint64_t seed = 0;
    double sigma_instructions = 0.0;
    double sigma_cycles = 0.0;
};

enum class SummarizeError : std::uint8_t { EmptySamples };

struct SummarizeResult {
    std::optional<StatSummary> summary;
    std::optional<SummarizeError> error;
};

SummarizeResult summarize(const std::vector<CostDelta>& samples,
                          const std::optional<NoiseModel>& noise = std::nullopt,
                          std::int64_t scale = 1);

/// One measured scenario row fed into calibration. Boot rows use raw counts
/// (Table-style 1M-scaled values multiplied out by the caller).
struct Measurement {
    std::string scenario;   // smc_rt | rmi_rt | rmi_version | rmi_delegate | cvm_boot | shadow_gpt_create
    std::string backend;    // single | two-gpt | shadow
    std::uint64_t ram_bytes = 0;  // cvm_boot only
    std::int64_t instructions = 0;
    std::int64_t cycles = 0;
};

enum class CalibrateError : std::uint8_t { UnderdeterminedSystem };

struct CalibrationResidual {
    std::string label;
    CostDelta measured;
    CostDelta predicted;
};

struct CalibrationResult {
    std::optional<CostWeights> weights;
    std::vector<CalibrationResidual> residuals;
    std::optional<CalibrateError> error;
    std::string detail;
};

/// Composition constants tying scenario measurements to primitive weights.
/// The CVM boot sequence issues a fixed set of full-path RMI calls besides
/// the per-granule delegation loop: control-granule delegates plus the
/// lifecycle calls (create, rec-create x vcpus, activate, first enter).
struct BootComposition {
    std::int64_t control_granule_delegates = 3;  // rd, rtt root, one rec
    std::int64_t lifecycle_rmi_calls = 4;        // create, rec-create, activate, enter
};

CalibrationResult calibrate(const std::vector<Measurement>& measurements,
                            std::uint64_t template_gpt_bytes,
                            BootComposition composition = {});

std::vector<Measurement> measurements_from_json(const std::string& text);
std::string measurements_to_json(const std::vector<Measurement>& rows);

}  // namespace ccasim
