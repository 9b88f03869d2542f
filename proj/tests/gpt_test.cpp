// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccasim/gpt.hpp"
#include "ccasim/util.hpp"

using namespace ccasim;

namespace {

GptTable build(const MemoryLayout& layout) {
    auto result = GptTable::build(layout);
    REQUIRE(std::holds_alternative<GptTable>(result));
    return std::get<GptTable>(std::move(result));
}

GptBackend init_backend(const MemoryLayout& layout, BackendKind kind) {
    auto result = GptBackend::init(layout, kind);
    REQUIRE(std::holds_alternative<GptBackend>(result));
    return std::get<GptBackend>(std::move(result));
}

}  // namespace

TEST_CASE("layout validation") {
    MemoryLayout overlapping;
    overlapping.regions = {{"a", 0, 1 << 20, RegionKind::Ram},
                           {"b", 1 << 19, 1 << 20, RegionKind::Ram}};
    CHECK(overlapping.validate() == GptError::OverlappingRegions);

    MemoryLayout unaligned;
    unaligned.regions = {{"a", 100, 1 << 20, RegionKind::Ram}};
    CHECK(unaligned.validate() == GptError::UnalignedRegion);

    MemoryLayout empty;
    CHECK(empty.validate() == GptError::EmptyLayout);

    CHECK_FALSE(MemoryLayout::default_layout().validate().has_value());
}

TEST_CASE("initial walks follow the layout") {
    MemoryLayout layout = MemoryLayout::default_layout();
    GptTable table = build(layout);

    const MemoryRegion* ram = layout.first_ram();
    // every RAM granule starts in the normal world
    SplitMix64 rng(3);
    for (int i = 0; i < 5000; ++i) {
        std::uint64_t pa = ram->base + rng.below(ram->size / kGranuleBytes) * kGranuleBytes;
        CHECK(std::get<Gpi>(table.walk(pa)) == Gpi::NonSecure);
    }
    CHECK(std::get<Gpi>(table.walk(0)) == Gpi::Root);                    // firmware
    CHECK(std::get<Gpi>(table.walk(0xF800'0000)) == Gpi::NonSecure);     // device window
    CHECK(std::holds_alternative<GptError>(table.walk(table.covered_bytes())));

    // untouched gigabyte regions stay block-mapped
    CHECK(table.l1_table_count() == 1);
    CHECK(table.byte_size() == 131104);  // the size the copy cost is calibrated against
}

TEST_CASE("block split and fuse keep the table canonical") {
    GptTable table = build(MemoryLayout::default_layout());
    REQUIRE(table.l1_table_count() == 1);

    // one granule inside a pristine 1 GB block forces a split
    std::uint64_t pa = 2ULL << 30;
    auto changed = table.set(pa, kGranuleBytes, Gpi::Realm);
    CHECK(std::get<std::uint64_t>(changed) == 1);
    CHECK(table.l1_table_count() == 2);
    CHECK(std::get<Gpi>(table.walk(pa)) == Gpi::Realm);
    CHECK(std::get<Gpi>(table.walk(pa + kGranuleBytes)) == Gpi::NonSecure);  // neighbor untouched
    CHECK(table.canonical());

    // writing the whole region back to one value fuses the level-1 table away
    auto fused = table.set(2ULL << 30, kL0RegionBytes, Gpi::NonSecure);
    CHECK(std::get<std::uint64_t>(fused) == 1);
    CHECK(table.l1_table_count() == 1);
    CHECK(table.canonical());
}

TEST_CASE("failed mutations leave no partial state") {
    GptTable table = build(MemoryLayout::default_layout());
    auto before = table.serialize();

    auto out_of_range = table.set(table.covered_bytes() - kGranuleBytes, 2 * kGranuleBytes, Gpi::Realm);
    CHECK(std::get<GptError>(out_of_range) == GptError::OutOfRange);
    auto unaligned = table.set(123, kGranuleBytes, Gpi::Realm);
    CHECK(std::get<GptError>(unaligned) == GptError::Unaligned);

    CHECK(table.serialize() == before);
}

TEST_CASE("serialized dump format") {
    GptTable table = build(MemoryLayout::compact(16 * kGranuleBytes));
    auto dump = table.serialize();

    // 8-byte little-endian granule count for a 1 GB covered range
    REQUIRE(dump.size() == 8 + kGranulesPerL0 / 2);
    CHECK(dump[0] == 0x00);
    CHECK(dump[1] == 0x00);
    CHECK(dump[2] == 0x04);  // 262144 = 0x40000
    CHECK(dump[3] == 0x00);
    for (int i = 4; i < 8; ++i) CHECK(dump[i] == 0x00);

    // firmware occupies the first 512 granules: packed root nibbles (0b1010)
    CHECK(dump[8] == 0xAA);
    CHECK(dump[8 + 255] == 0xAA);
    // then 4 KiB of RAM granules (non-secure, 0b1001)
    CHECK(dump[8 + 256] == 0x99);
    // the uncovered remainder reads as no-access
    CHECK(dump[dump.size() - 1] == 0x00);
}

TEST_CASE("clone is structurally independent") {
    GptTable table = build(MemoryLayout::default_layout());
    GptTable copy = table.clone();
    CHECK(copy.serialize() == table.serialize());

    (void)copy.set(3ULL << 30, kGranuleBytes, Gpi::Root);
    CHECK(std::get<Gpi>(table.walk(3ULL << 30)) == Gpi::NonSecure);
    CHECK_FALSE(copy.serialize() == table.serialize());
}

TEST_CASE("random mutations agree with the flat oracle") {
    MemoryLayout layout = MemoryLayout::compact(32ULL << 20);
    GptTable table = build(layout);
    GranuleOracle oracle(layout);
    const std::uint64_t granules = table.granule_count();
    SplitMix64 rng(17);
    const Gpi palette[] = {Gpi::NoAccess, Gpi::Secure, Gpi::NonSecure, Gpi::Root, Gpi::Realm, Gpi::Any};

    for (int op = 0; op < 2000; ++op) {
        std::uint64_t start = rng.below(granules);
        std::uint64_t len = 1 + rng.below(700);
        len = std::min(len, granules - start);
        Gpi gpi = palette[rng.below(6)];
        auto res = table.set(start * kGranuleBytes, len * kGranuleBytes, gpi);
        REQUIRE(std::holds_alternative<std::uint64_t>(res));
        oracle.set(start * kGranuleBytes, len * kGranuleBytes, gpi);

        for (int probe = 0; probe < 16; ++probe) {
            std::uint64_t pa = rng.below(granules) * kGranuleBytes;
            CHECK(table.walk_unchecked(pa) == oracle.at(pa));
        }
        CHECK(table.canonical());
    }
    for (std::uint64_t g = 0; g < granules; ++g)
        REQUIRE(table.walk_unchecked(g * kGranuleBytes) == oracle.at(g * kGranuleBytes));
}

TEST_CASE("single backend delegation transitions") {
    GptBackend backend = init_backend(MemoryLayout::default_layout(), BackendKind::Single);
    std::uint64_t pa = backend.layout().first_ram()->base;

    auto delegated = backend.delegate_granule(pa);
    REQUIRE(std::holds_alternative<GptMutation>(delegated));
    CHECK(std::get<GptMutation>(delegated).tokens.size() == 1);
    CHECK(std::get<Gpi>(backend.walk(pa)) == Gpi::Realm);

    // already delegated
    CHECK(std::get<GptError>(backend.delegate_granule(pa)) == GptError::IllegalGranuleTransition);
    // firmware carve-outs are exempt
    CHECK(std::get<GptError>(backend.delegate_granule(0)) == GptError::IllegalGranuleTransition);
    // device memory is not delegable RAM
    CHECK(std::get<GptError>(backend.delegate_granule(0xF000'0000)) ==
          GptError::IllegalGranuleTransition);

    auto undelegated = backend.undelegate_granule(pa);
    REQUIRE(std::holds_alternative<GptMutation>(undelegated));
    CHECK(std::get<Gpi>(backend.walk(pa)) == Gpi::NonSecure);
    CHECK(std::get<GptError>(backend.undelegate_granule(pa)) == GptError::IllegalGranuleTransition);
}

TEST_CASE("two-table backend keeps the coupled pair") {
    GptBackend backend = init_backend(MemoryLayout::default_layout(), BackendKind::TwoGpt);
    const MemoryRegion* ram = backend.layout().first_ram();

    // at init gpt1 maps RAM normal and gpt2 maps everything root
    SplitMix64 rng(23);
    for (int i = 0; i < 2000; ++i) {
        std::uint64_t pa = ram->base + rng.below(ram->size / kGranuleBytes) * kGranuleBytes;
        auto pair = std::get<GptBackend::GpiPair>(backend.walk_pair(pa));
        CHECK(pair.primary == Gpi::NonSecure);
        CHECK(pair.secondary == Gpi::Root);
    }

    // reserved firmware regions keep their layout-assigned pair
    auto fw_pair = std::get<GptBackend::GpiPair>(backend.walk_pair(0));
    CHECK(fw_pair.primary == Gpi::Root);
    CHECK(fw_pair.secondary == Gpi::Root);

    std::uint64_t pa = ram->base + 64 * kGranuleBytes;
    auto delegated = backend.delegate_granule(pa);
    REQUIRE(std::holds_alternative<GptMutation>(delegated));
    CHECK(std::get<GptMutation>(delegated).tokens.size() == 2);  // one per table
    auto pair = std::get<GptBackend::GpiPair>(backend.walk_pair(pa));
    CHECK(pair.primary == Gpi::Realm);
    CHECK(pair.secondary == Gpi::NonSecure);

    CHECK(std::get<GptError>(backend.delegate_granule(pa)) == GptError::IllegalGranuleTransition);

    auto undelegated = backend.undelegate_granule(pa);
    REQUIRE(std::holds_alternative<GptMutation>(undelegated));
    pair = std::get<GptBackend::GpiPair>(backend.walk_pair(pa));
    CHECK(pair.primary == Gpi::NonSecure);
    CHECK(pair.secondary == Gpi::Root);
}

TEST_CASE("delegate then undelegate is the identity on serialized state") {
    for (BackendKind kind : {BackendKind::Single, BackendKind::TwoGpt, BackendKind::Shadow}) {
        GptBackend backend = init_backend(MemoryLayout::compact(8ULL << 20), kind);
        auto before = backend.primary().serialize();
        std::uint64_t base = backend.layout().first_ram()->base;
        SplitMix64 rng(31);
        std::vector<std::uint64_t> delegated;
        for (int i = 0; i < 200; ++i) {
            std::uint64_t pa = base + rng.below(2048) * kGranuleBytes;
            if (std::holds_alternative<GptMutation>(backend.delegate_granule(pa)))
                delegated.push_back(pa);
        }
        for (std::uint64_t pa : delegated)
            REQUIRE(std::holds_alternative<GptMutation>(backend.undelegate_granule(pa)));
        CHECK(backend.primary().serialize() == before);
    }
}

TEST_CASE("shadow backend starts from its template and diverges independently") {
    GptBackend backend = init_backend(MemoryLayout::default_layout(), BackendKind::Shadow);
    REQUIRE(backend.secondary() != nullptr);
    CHECK(backend.primary().serialize() == backend.secondary()->serialize());

    std::uint64_t pa = backend.layout().first_ram()->base;
    REQUIRE(std::holds_alternative<GptMutation>(backend.delegate_granule(pa)));
    CHECK(std::get<Gpi>(backend.walk(pa)) == Gpi::Realm);
    CHECK(backend.secondary()->walk_unchecked(pa) == Gpi::NonSecure);  // template untouched
}

TEST_CASE("gpi codes serialize to the documented nibbles") {
    CHECK(static_cast<int>(Gpi::NoAccess) == 0b0000);
    CHECK(static_cast<int>(Gpi::Secure) == 0b1000);
    CHECK(static_cast<int>(Gpi::NonSecure) == 0b1001);
    CHECK(static_cast<int>(Gpi::Root) == 0b1010);
    CHECK(static_cast<int>(Gpi::Realm) == 0b1011);
    CHECK(static_cast<int>(Gpi::Any) == 0b1111);
}
