// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ccasim/board.hpp"

namespace ccasim {

/// Granule protection info: the world tag stored per granule.
enum class Gpi : std::uint8_t {
    NoAccess = 0b0000,
    Secure = 0b1000,
    NonSecure = 0b1001,
    Root = 0b1010,
    Realm = 0b1011,
    Any = 0b1111,
};

std::string_view gpi_name(Gpi gpi);

enum class GptError : std::uint8_t {
    OverlappingRegions,
    UnalignedRegion,
    OutOfRange,
    Unaligned,
    IllegalGranuleTransition,
    EmptyLayout,
};

std::string_view gpt_error_name(GptError e);

enum class RegionKind : std::uint8_t { Firmware, Ram, Device };

struct MemoryRegion {
    std::string name;
    std::uint64_t base = 0;
    std::uint64_t size = 0;
    RegionKind kind = RegionKind::Ram;

    std::uint64_t end() const { return base + size; }
};

/// Named physical-memory map. Firmware regions initialize to Root and are
/// exempt from delegation; RAM and device regions initialize to NonSecure.
struct MemoryLayout {
    std::vector<MemoryRegion> regions;

    /// 4 GB map with firmware carve-outs in the first gigabyte, DRAM up to
    /// the MMIO window, devices on top. The carve-outs split exactly one L0
    /// block, which pins the table byte size the cost model is calibrated to.
    static MemoryLayout default_layout();

    /// Minimal two-region layout for small differential tests.
    static MemoryLayout compact(std::uint64_t ram_bytes);

    std::optional<GptError> validate() const;
    std::uint64_t extent() const;          // highest region end
    std::uint64_t covered_bytes() const;   // extent rounded up to 1 GB
    const MemoryRegion* region_at(std::uint64_t pa) const;
    Gpi initial_gpi(std::uint64_t pa) const;
    bool delegable(std::uint64_t pa) const;
    const MemoryRegion* first_ram() const;
};

constexpr std::uint64_t kL0RegionBytes = 1ULL << 30;
constexpr std::uint64_t kGranulesPerL0 = kL0RegionBytes / kGranuleBytes;

/// Two-level granule protection table: 1 GB L0 descriptors, each either a
/// uniform block or a per-granule L1 table. Mutations keep the table
/// canonical (uniform L1 tables are fused back into blocks) and copy shared
/// L1 tables before writing, so snapshots stay valid.
class GptTable {
public:
    GptTable() = default;

    static std::variant<GptTable, GptError> build(const MemoryLayout& layout);

    std::variant<Gpi, GptError> walk(std::uint64_t pa) const;
    /// Unchecked variant for hot loops; pa must be inside covered_bytes().
    Gpi walk_unchecked(std::uint64_t pa) const;

    /// Sets [base, base+size) to gpi. Validates before mutating; on error the
    /// table is untouched. Returns the number of granules whose value
    /// actually changed.
    std::variant<std::uint64_t, GptError> set(std::uint64_t base, std::uint64_t size, Gpi gpi);

    /// Structurally independent deep copy (nothing shared with *this).
    GptTable clone() const;

    std::uint64_t covered_bytes() const { return static_cast<std::uint64_t>(l0_.size()) * kL0RegionBytes; }
    std::uint64_t granule_count() const { return covered_bytes() / kGranuleBytes; }

    /// Architectural footprint: 8 bytes per L0 descriptor plus 4 bits per
    /// granule for every split L0 region.
    std::uint64_t byte_size() const;
    std::size_t l1_table_count() const;

    /// Flat dump: 8-byte little-endian granule count, then packed 4-bit GPI
    /// codes, low nibble first.
    std::vector<std::uint8_t> serialize() const;

    bool same_content(const GptTable& other) const;

    /// True if no L0 entry references a uniform L1 table (canonical form).
    bool canonical() const;

private:
    struct L1Table {
        std::vector<Gpi> entries;
    };
    using L1Ref = std::shared_ptr<L1Table>;
    using L0Entry = std::variant<Gpi, L1Ref>;

    std::vector<L0Entry> l0_;

    L1Table& writable_l1(std::size_t l0_index);
    void fuse_if_uniform(std::size_t l0_index);
};

/// Flat per-granule reference map used to differentially check the table.
class GranuleOracle {
public:
    GranuleOracle() = default;
    explicit GranuleOracle(const MemoryLayout& layout);

    void set(std::uint64_t base, std::uint64_t size, Gpi gpi);
    Gpi at(std::uint64_t pa) const { return map_[pa / kGranuleBytes]; }
    std::uint64_t granule_count() const { return map_.size(); }

private:
    std::vector<Gpi> map_;
};

enum class BackendKind : std::uint8_t { Single, TwoGpt, Shadow };

std::string_view backend_kind_name(BackendKind k);
std::optional<BackendKind> backend_kind_from_name(std::string_view name);

struct TlbMaintenanceToken {
    std::uint64_t id = 0;
};

struct GptMutation {
    std::uint64_t granules_changed = 0;
    std::vector<TlbMaintenanceToken> tokens;
};

/// The active protection-table configuration: one table, the coupled
/// two-table variant, or a live table alongside a pre-built template.
class GptBackend {
public:
    static std::variant<GptBackend, GptError> init(const MemoryLayout& layout, BackendKind kind);

    BackendKind kind() const { return kind_; }
    const MemoryLayout& layout() const { return layout_; }

    /// Table consulted by granule protection checks (gpt1 / live table).
    const GptTable& primary() const { return primary_; }
    /// Second table for TwoGpt, the template for Shadow, null for Single.
    const GptTable* secondary() const;

    std::variant<Gpi, GptError> walk(std::uint64_t pa) const { return primary_.walk(pa); }

    struct GpiPair {
        Gpi primary;
        std::optional<Gpi> secondary;
    };
    std::variant<GpiPair, GptError> walk_pair(std::uint64_t pa) const;

    std::variant<GptMutation, GptError> set_primary(std::uint64_t base, std::uint64_t size, Gpi gpi);

    /// Both tables transition or neither. Delegation requires the coupled
    /// source state ((NonSecure, Root) / NonSecure); undelegation the inverse.
    std::variant<GptMutation, GptError> delegate_granule(std::uint64_t pa);
    std::variant<GptMutation, GptError> undelegate_granule(std::uint64_t pa);

    std::size_t tables_built() const { return tables_built_; }

private:
    GptBackend(MemoryLayout layout, BackendKind kind) : layout_(std::move(layout)), kind_(kind) {}

    std::optional<GptError> check_delegable(std::uint64_t pa) const;
    TlbMaintenanceToken next_token() { return TlbMaintenanceToken{++token_counter_}; }

    MemoryLayout layout_;
    BackendKind kind_;
    GptTable primary_;
    GptTable secondary_;       // TwoGpt: gpt2; Shadow: template
    bool has_secondary_ = false;
    std::size_t tables_built_ = 0;
    std::uint64_t token_counter_ = 0;
};

}  // namespace ccasim
