// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccasim/board.hpp"
#include "ccasim/util.hpp"

using namespace ccasim;

TEST_CASE("builtin profiles carry the documented feature sets") {
    BoardProfile rk = BoardProfile::rk3588();
    CHECK_FALSE(rk.has_rme);
    CHECK_FALSE(rk.has_ttst);
    CHECK_FALSE(rk.has_fwb);
    CHECK_FALSE(rk.has_ecv);
    CHECK(rk.granule_size == 4096);

    BoardProfile fvp = BoardProfile::fvp_rme();
    CHECK(fvp.has_rme);
    CHECK(fvp.has_ttst);
    CHECK(fvp.has_fwb);
    CHECK(fvp.has_ecv);

    CHECK_FALSE(BoardProfile::builtin("imaginary-board").has_value());
}

TEST_CASE("profile config round trips through JSON") {
    BoardProfile rk = BoardProfile::rk3588();
    BoardProfile parsed = BoardProfile::from_json(rk.to_json());
    CHECK(parsed.name == rk.name);
    CHECK(parsed.has_rme == rk.has_rme);
    CHECK(parsed.core_count == rk.core_count);
    CHECK(parsed.asid_partition_mode == rk.asid_partition_mode);
}

TEST_CASE("profile config validation") {
    CHECK_THROWS(BoardProfile::from_json(R"({"name":"x","features":{"rme":false,"ttst":false,)"
                                         R"("fwb":false,"ecv":false},"granule_size":8192})"));
    // renaming a shipped profile with the wrong feature set is rejected
    CHECK_THROWS(BoardProfile::from_json(
        R"({"name":"rk3588","features":{"rme":true,"ttst":false,"fwb":false,"ecv":false}})"));
    CHECK_THROWS(BoardProfile::from_json(
        R"({"name":"fvp-rme","features":{"rme":true,"ttst":false,"fwb":true,"ecv":true}})"));
}

TEST_CASE("GPT registers read the shadow store on no-RME profiles") {
    BoardProfile rk = BoardProfile::rk3588();
    RegisterFile regs = RegisterFile::for_profile(rk);

    // fixed configurable value handed out at profile load
    auto gpccr = regs.read(rk, SysReg::GpccrEl3);
    CHECK(std::get<std::uint64_t>(gpccr) == kGpccrShadowDefault);

    auto cntpoff = regs.read(rk, SysReg::Cntpoff);
    CHECK(std::get<std::uint64_t>(cntpoff) == 0);
}

TEST_CASE("shadow and native stores stay disjoint") {
    BoardProfile rk = BoardProfile::rk3588();
    RegisterFile regs = RegisterFile::for_profile(rk);
    std::uint64_t native_before = regs.native_gpccr();
    CHECK_FALSE(regs.write(rk, SysReg::GpccrEl3, 0xABCD).has_value());
    CHECK(std::get<std::uint64_t>(regs.read(rk, SysReg::GpccrEl3)) == 0xABCD);
    CHECK(regs.shadow_gpccr() == 0xABCD);
    CHECK(regs.native_gpccr() == native_before);

    BoardProfile fvp = BoardProfile::fvp_rme();
    RegisterFile fvp_regs = RegisterFile::for_profile(fvp);
    std::uint64_t shadow_before = fvp_regs.shadow_gpccr();
    CHECK_FALSE(fvp_regs.write(fvp, SysReg::GpccrEl3, 0x1234).has_value());
    CHECK(fvp_regs.native_gpccr() == 0x1234);
    CHECK(fvp_regs.shadow_gpccr() == shadow_before);
}

TEST_CASE("CNTPOFF writes are rejected without ECV") {
    BoardProfile rk = BoardProfile::rk3588();
    RegisterFile regs = RegisterFile::for_profile(rk);
    auto err = regs.write(rk, SysReg::Cntpoff, 5);
    REQUIRE(err.has_value());
    CHECK(*err == RegError::ReadOnlyOnProfile);
    CHECK(std::get<std::uint64_t>(regs.read(rk, SysReg::Cntpoff)) == 0);

    BoardProfile fvp = BoardProfile::fvp_rme();
    RegisterFile fvp_regs = RegisterFile::for_profile(fvp);
    CHECK_FALSE(fvp_regs.write(fvp, SysReg::Cntpoff, 0).has_value());  // identity write
    CHECK(std::get<std::uint64_t>(fvp_regs.read(fvp, SysReg::Cntpoff)) == 0);
}

TEST_CASE("timer masking goes through the EL0 control register") {
    BoardProfile rk = BoardProfile::rk3588();
    RegisterFile regs = RegisterFile::for_profile(rk);
    CHECK_FALSE(regs.timer_masked());
    CHECK_FALSE(regs.write(rk, SysReg::CntpCtlEl0, kCntpCtlEnable | kCntpCtlImask).has_value());
    CHECK(regs.timer_masked());
    // out-of-range control bits
    auto err = regs.write(rk, SysReg::CntpCtlEl0, 0xF0);
    REQUIRE(err.has_value());
    CHECK(*err == RegError::InvalidValue);
}

TEST_CASE("register ids are a closed enumeration") {
    CHECK(sys_reg_from_name("GPCCR_EL3") == SysReg::GpccrEl3);
    CHECK(sys_reg_from_name("CNTP_CTL_EL0") == SysReg::CntpCtlEl0);
    CHECK_FALSE(sys_reg_from_name("ACTLR_EL1").has_value());
    CHECK_FALSE(sys_reg_from_name("").has_value());
}

TEST_CASE("reads are pure") {
    BoardProfile rk = BoardProfile::rk3588();
    RegisterFile regs = RegisterFile::for_profile(rk);
    SplitMix64 rng(11);
    const SysReg all[] = {SysReg::ScrEl3, SysReg::GptbrEl3, SysReg::GpccrEl3, SysReg::CntpCtlEl0,
                          SysReg::Cntpoff};
    for (int i = 0; i < 200; ++i) {
        SysReg target = all[rng.below(4)];  // skip CNTPOFF writes on rk3588
        std::uint64_t value = rng.next() & 3;
        (void)regs.write(rk, target, value);
        for (SysReg reg : all) {
            auto first = regs.read(rk, reg);
            auto second = regs.read(rk, reg);
            CHECK(std::get<std::uint64_t>(first) == std::get<std::uint64_t>(second));
        }
    }
}
