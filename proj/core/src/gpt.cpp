// SPDX-License-Identifier: Apache-2.0
#include "ccasim/gpt.hpp"

#include <algorithm>

namespace ccasim {

std::string_view gpi_name(Gpi gpi) {
    switch (gpi) {
        case Gpi::NoAccess: return "no-access";
        case Gpi::Secure: return "secure";
        case Gpi::NonSecure: return "non-secure";
        case Gpi::Root: return "root";
        case Gpi::Realm: return "realm";
        case Gpi::Any: return "any";
    }
    return "?";
}

std::string_view gpt_error_name(GptError e) {
    switch (e) {
        case GptError::OverlappingRegions: return "OverlappingRegions";
        case GptError::UnalignedRegion: return "UnalignedRegion";
        case GptError::OutOfRange: return "OutOfRange";
        case GptError::Unaligned: return "Unaligned";
        case GptError::IllegalGranuleTransition: return "IllegalGranuleTransition";
        case GptError::EmptyLayout: return "EmptyLayout";
    }
    return "?";
}

std::string_view backend_kind_name(BackendKind k) {
    switch (k) {
        case BackendKind::Single: return "single";
        case BackendKind::TwoGpt: return "two-gpt";
        case BackendKind::Shadow: return "shadow";
    }
    return "?";
}

std::optional<BackendKind> backend_kind_from_name(std::string_view name) {
    if (name == "single") return BackendKind::Single;
    if (name == "two-gpt" || name == "two_gpt" || name == "twogpt") return BackendKind::TwoGpt;
    if (name == "shadow") return BackendKind::Shadow;
    return std::nullopt;
}

MemoryLayout MemoryLayout::default_layout() {
    constexpr std::uint64_t kMib = 1ULL << 20;
    MemoryLayout layout;
    layout.regions = {
        {"bl31", 0, 2 * kMib, RegionKind::Firmware},
        {"rmm", 2 * kMib, 4 * kMib, RegionKind::Firmware},
        {"gpt-store", 6 * kMib, 1 * kMib, RegionKind::Firmware},
        {"dram", 7 * kMib, 0xF000'0000ULL - 7 * kMib, RegionKind::Ram},
        {"mmio", 0xF000'0000ULL, 0x1'0000'0000ULL - 0xF000'0000ULL, RegionKind::Device},
    };
    return layout;
}

MemoryLayout MemoryLayout::compact(std::uint64_t ram_bytes) {
    constexpr std::uint64_t kMib = 1ULL << 20;
    MemoryLayout layout;
    layout.regions = {
        {"fw", 0, 2 * kMib, RegionKind::Firmware},
        {"dram", 2 * kMib, ram_bytes, RegionKind::Ram},
    };
    return layout;
}

std::optional<GptError> MemoryLayout::validate() const {
    if (regions.empty()) return GptError::EmptyLayout;
    for (const auto& r : regions) {
        if (r.size == 0 || r.base % kGranuleBytes != 0 || r.size % kGranuleBytes != 0)
            return GptError::UnalignedRegion;
    }
    std::vector<const MemoryRegion*> sorted;
    sorted.reserve(regions.size());
    for (const auto& r : regions) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const MemoryRegion* a, const MemoryRegion* b) { return a->base < b->base; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i]->base < sorted[i - 1]->end()) return GptError::OverlappingRegions;
    }
    return std::nullopt;
}

std::uint64_t MemoryLayout::extent() const {
    std::uint64_t end = 0;
    for (const auto& r : regions) end = std::max(end, r.end());
    return end;
}

std::uint64_t MemoryLayout::covered_bytes() const {
    std::uint64_t e = extent();
    return (e + kL0RegionBytes - 1) / kL0RegionBytes * kL0RegionBytes;
}

const MemoryRegion* MemoryLayout::region_at(std::uint64_t pa) const {
    for (const auto& r : regions)
        if (pa >= r.base && pa < r.end()) return &r;
    return nullptr;
}

Gpi MemoryLayout::initial_gpi(std::uint64_t pa) const {
    const MemoryRegion* r = region_at(pa);
    if (!r) return Gpi::NoAccess;
    return r->kind == RegionKind::Firmware ? Gpi::Root : Gpi::NonSecure;
}

bool MemoryLayout::delegable(std::uint64_t pa) const {
    const MemoryRegion* r = region_at(pa);
    return r != nullptr && r->kind == RegionKind::Ram;
}

const MemoryRegion* MemoryLayout::first_ram() const {
    for (const auto& r : regions)
        if (r.kind == RegionKind::Ram) return &r;
    return nullptr;
}

std::variant<GptTable, GptError> GptTable::build(const MemoryLayout& layout) {
    if (auto err = layout.validate()) return *err;
    GptTable table;
    table.l0_.assign(layout.covered_bytes() / kL0RegionBytes, L0Entry{Gpi::NoAccess});
    for (const auto& r : layout.regions) {
        Gpi gpi = r.kind == RegionKind::Firmware ? Gpi::Root : Gpi::NonSecure;
        auto res = table.set(r.base, r.size, gpi);
        if (std::holds_alternative<GptError>(res)) return std::get<GptError>(res);
    }
    return table;
}

std::variant<Gpi, GptError> GptTable::walk(std::uint64_t pa) const {
    if (pa >= covered_bytes()) return GptError::OutOfRange;
    return walk_unchecked(pa);
}

Gpi GptTable::walk_unchecked(std::uint64_t pa) const {
    const L0Entry& entry = l0_[pa / kL0RegionBytes];
    if (const Gpi* block = std::get_if<Gpi>(&entry)) return *block;
    const L1Ref& l1 = std::get<L1Ref>(entry);
    return l1->entries[(pa / kGranuleBytes) % kGranulesPerL0];
}

GptTable::L1Table& GptTable::writable_l1(std::size_t l0_index) {
    L0Entry& entry = l0_[l0_index];
    if (const Gpi* block = std::get_if<Gpi>(&entry)) {
        auto l1 = std::make_shared<L1Table>();
        l1->entries.assign(kGranulesPerL0, *block);
        entry = std::move(l1);
    } else {
        L1Ref& ref = std::get<L1Ref>(entry);
        if (ref.use_count() > 1) ref = std::make_shared<L1Table>(*ref);
    }
    return *std::get<L1Ref>(entry);
}

void GptTable::fuse_if_uniform(std::size_t l0_index) {
    L0Entry& entry = l0_[l0_index];
    const L1Ref* ref = std::get_if<L1Ref>(&entry);
    if (!ref) return;
    const auto& entries = (*ref)->entries;
    Gpi first = entries.front();
    for (Gpi g : entries)
        if (g != first) return;
    entry = first;
}

std::variant<std::uint64_t, GptError> GptTable::set(std::uint64_t base, std::uint64_t size, Gpi gpi) {
    if (base % kGranuleBytes != 0 || size % kGranuleBytes != 0) return GptError::Unaligned;
    if (base + size < base || base + size > covered_bytes()) return GptError::OutOfRange;
    if (size == 0) return std::uint64_t{0};

    std::uint64_t changed = 0;
    std::uint64_t first = base / kGranuleBytes;
    std::uint64_t last = (base + size) / kGranuleBytes;  // exclusive
    for (std::uint64_t g = first; g < last;) {
        std::size_t l0_index = g / kGranulesPerL0;
        std::uint64_t l0_first = static_cast<std::uint64_t>(l0_index) * kGranulesPerL0;
        std::uint64_t span_end = std::min(last, l0_first + kGranulesPerL0);

        if (g == l0_first && span_end == l0_first + kGranulesPerL0) {
            // full L0 region: set the block directly
            if (const Gpi* block = std::get_if<Gpi>(&l0_[l0_index])) {
                if (*block != gpi) changed += kGranulesPerL0;
            } else {
                for (Gpi old : std::get<L1Ref>(l0_[l0_index])->entries)
                    if (old != gpi) ++changed;
            }
            l0_[l0_index] = gpi;
            g = span_end;
            continue;
        }

        if (const Gpi* block = std::get_if<Gpi>(&l0_[l0_index]); block && *block == gpi) {
            g = span_end;
            continue;  // already uniform with the target value
        }
        L1Table& l1 = writable_l1(l0_index);
        for (std::uint64_t i = g; i < span_end; ++i) {
            Gpi& slot = l1.entries[i - l0_first];
            if (slot != gpi) {
                slot = gpi;
                ++changed;
            }
        }
        fuse_if_uniform(l0_index);
        g = span_end;
    }
    return changed;
}

GptTable GptTable::clone() const {
    GptTable copy;
    copy.l0_.reserve(l0_.size());
    for (const L0Entry& entry : l0_) {
        if (const Gpi* block = std::get_if<Gpi>(&entry)) {
            copy.l0_.emplace_back(*block);
        } else {
            copy.l0_.emplace_back(std::make_shared<L1Table>(*std::get<L1Ref>(entry)));
        }
    }
    return copy;
}

std::uint64_t GptTable::byte_size() const {
    return l0_.size() * 8 + l1_table_count() * (kGranulesPerL0 / 2);
}

std::size_t GptTable::l1_table_count() const {
    std::size_t n = 0;
    for (const L0Entry& entry : l0_)
        if (std::holds_alternative<L1Ref>(entry)) ++n;
    return n;
}

std::vector<std::uint8_t> GptTable::serialize() const {
    std::uint64_t count = granule_count();
    std::vector<std::uint8_t> out;
    out.reserve(8 + (count + 1) / 2);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((count >> (8 * i)) & 0xFF));
    std::uint8_t pending = 0;
    for (std::uint64_t g = 0; g < count; ++g) {
        auto code = static_cast<std::uint8_t>(walk_unchecked(g * kGranuleBytes)) & 0x0F;
        if ((g & 1) == 0) {
            pending = code;
        } else {
            out.push_back(static_cast<std::uint8_t>(pending | (code << 4)));
        }
    }
    if ((count & 1) != 0) out.push_back(pending);
    return out;
}

bool GptTable::same_content(const GptTable& other) const {
    if (covered_bytes() != other.covered_bytes()) return false;
    for (std::uint64_t pa = 0; pa < covered_bytes(); pa += kGranuleBytes)
        if (walk_unchecked(pa) != other.walk_unchecked(pa)) return false;
    return true;
}

bool GptTable::canonical() const {
    for (std::size_t i = 0; i < l0_.size(); ++i) {
        const L1Ref* ref = std::get_if<L1Ref>(&l0_[i]);
        if (!ref) continue;
        const auto& entries = (*ref)->entries;
        if (std::all_of(entries.begin(), entries.end(),
                        [&](Gpi g) { return g == entries.front(); }))
            return false;
    }
    return true;
}

GranuleOracle::GranuleOracle(const MemoryLayout& layout) {
    std::uint64_t count = layout.covered_bytes() / kGranuleBytes;
    map_.assign(count, Gpi::NoAccess);
    for (std::uint64_t g = 0; g < count; ++g) map_[g] = layout.initial_gpi(g * kGranuleBytes);
}

void GranuleOracle::set(std::uint64_t base, std::uint64_t size, Gpi gpi) {
    for (std::uint64_t pa = base; pa < base + size; pa += kGranuleBytes) map_[pa / kGranuleBytes] = gpi;
}

std::variant<GptBackend, GptError> GptBackend::init(const MemoryLayout& layout, BackendKind kind) {
    if (auto err = layout.validate()) return *err;
    GptBackend backend(layout, kind);

    auto built = GptTable::build(layout);
    if (std::holds_alternative<GptError>(built)) return std::get<GptError>(built);

    switch (kind) {
        case BackendKind::Single:
            backend.primary_ = std::get<GptTable>(std::move(built));
            backend.tables_built_ = 1;
            break;
        case BackendKind::TwoGpt: {
            backend.primary_ = std::get<GptTable>(std::move(built));
            // gpt2 starts with every covered granule in the root world.
            GptTable gpt2;
            auto all_root = GptTable::build(layout);
            gpt2 = std::get<GptTable>(std::move(all_root));
            auto res = gpt2.set(0, gpt2.covered_bytes(), Gpi::Root);
            (void)res;
            backend.secondary_ = std::move(gpt2);
            backend.has_secondary_ = true;
            backend.tables_built_ = 2;
            break;
        }
        case BackendKind::Shadow:
            // The template is pre-built; the live table starts as its copy.
            backend.secondary_ = std::get<GptTable>(std::move(built));
            backend.primary_ = backend.secondary_.clone();
            backend.has_secondary_ = true;
            backend.tables_built_ = 1;
            break;
    }
    return backend;
}

const GptTable* GptBackend::secondary() const { return has_secondary_ ? &secondary_ : nullptr; }

std::variant<GptBackend::GpiPair, GptError> GptBackend::walk_pair(std::uint64_t pa) const {
    auto first = primary_.walk(pa);
    if (std::holds_alternative<GptError>(first)) return std::get<GptError>(first);
    GpiPair pair{std::get<Gpi>(first), std::nullopt};
    if (kind_ == BackendKind::TwoGpt) pair.secondary = std::get<Gpi>(secondary_.walk(pa));
    return pair;
}

std::variant<GptMutation, GptError> GptBackend::set_primary(std::uint64_t base, std::uint64_t size,
                                                            Gpi gpi) {
    auto res = primary_.set(base, size, gpi);
    if (std::holds_alternative<GptError>(res)) return std::get<GptError>(res);
    GptMutation m{std::get<std::uint64_t>(res), {}};
    m.tokens.push_back(next_token());
    return m;
}

std::optional<GptError> GptBackend::check_delegable(std::uint64_t pa) const {
    if (pa % kGranuleBytes != 0) return GptError::Unaligned;
    if (pa >= primary_.covered_bytes()) return GptError::OutOfRange;
    if (!layout_.delegable(pa)) return GptError::IllegalGranuleTransition;
    return std::nullopt;
}

std::variant<GptMutation, GptError> GptBackend::delegate_granule(std::uint64_t pa) {
    if (auto err = check_delegable(pa)) return *err;
    GptMutation m;
    if (kind_ == BackendKind::TwoGpt) {
        if (primary_.walk_unchecked(pa) != Gpi::NonSecure ||
            secondary_.walk_unchecked(pa) != Gpi::Root)
            return GptError::IllegalGranuleTransition;
        (void)primary_.set(pa, kGranuleBytes, Gpi::Realm);
        (void)secondary_.set(pa, kGranuleBytes, Gpi::NonSecure);
        m.granules_changed = 2;
        m.tokens.push_back(next_token());
        m.tokens.push_back(next_token());
        return m;
    }
    if (primary_.walk_unchecked(pa) != Gpi::NonSecure) return GptError::IllegalGranuleTransition;
    (void)primary_.set(pa, kGranuleBytes, Gpi::Realm);
    m.granules_changed = 1;
    m.tokens.push_back(next_token());
    return m;
}

std::variant<GptMutation, GptError> GptBackend::undelegate_granule(std::uint64_t pa) {
    if (auto err = check_delegable(pa)) return *err;
    GptMutation m;
    if (kind_ == BackendKind::TwoGpt) {
        if (primary_.walk_unchecked(pa) != Gpi::Realm ||
            secondary_.walk_unchecked(pa) != Gpi::NonSecure)
            return GptError::IllegalGranuleTransition;
        (void)primary_.set(pa, kGranuleBytes, Gpi::NonSecure);
        (void)secondary_.set(pa, kGranuleBytes, Gpi::Root);
        m.granules_changed = 2;
        m.tokens.push_back(next_token());
        m.tokens.push_back(next_token());
        return m;
    }
    if (primary_.walk_unchecked(pa) != Gpi::Realm) return GptError::IllegalGranuleTransition;
    (void)primary_.set(pa, kGranuleBytes, Gpi::NonSecure);
    m.granules_changed = 1;
    m.tokens.push_back(next_token());
    return m;
}

}  // namespace ccasim
