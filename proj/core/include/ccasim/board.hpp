// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace ccasim {

constexpr std::uint64_t kGranuleBytes = 4096;

/// Hardware feature profile. Immutable after load.
struct BoardProfile {
    std::string name;
    bool has_rme = false;
    bool has_ttst = false;
    bool has_fwb = false;
    bool has_ecv = false;
    std::uint64_t granule_size = kGranuleBytes;
    std::uint32_t core_count = 4;
    /// off: flush the EL2 TLB whenever realm and normal world multiplex;
    /// on: the hypervisor cedes a reserved ASID range instead.
    bool asid_partition_mode = false;

    static BoardProfile rk3588();
    static BoardProfile fvp_rme();
    static std::optional<BoardProfile> builtin(std::string_view name);

    std::string to_json() const;
    /// Parses the profile config format. Throws std::runtime_error on
    /// malformed input or violated profile constraints (granule size,
    /// built-in feature sets).
    static BoardProfile from_json(const std::string& text);
};

enum class SysReg : std::uint8_t {
    ScrEl3,      // only the NS bit is modeled
    GptbrEl3,
    GpccrEl3,
    CntpCtlEl0,  // bit0 enable, bit1 imask
    Cntpoff,
};

std::string_view sys_reg_name(SysReg reg);
std::optional<SysReg> sys_reg_from_name(std::string_view name);

enum class RegError : std::uint8_t {
    UnknownRegister,
    ReadOnlyOnProfile,
    InvalidValue,
};

std::string_view reg_error_name(RegError e);

/// GPCCR_EL3 image handed out on boards without RME: GPC enabled, 4 KB
/// granules (PGS=0), 1 GB L0 regions (L0GPTSZ=0), 40-bit protected space.
constexpr std::uint64_t kGpccrShadowDefault = (1ULL << 16) | 0b010;

constexpr std::uint64_t kCntpCtlEnable = 1ULL << 0;
constexpr std::uint64_t kCntpCtlImask = 1ULL << 1;

/// Modeled system registers of one core. On no-RME profiles the GPT registers
/// are backed by a dummy shadow store (the AFSRx trick) that is fully
/// disjoint from the native register slots.
class RegisterFile {
public:
    static RegisterFile for_profile(const BoardProfile& profile);

    std::variant<std::uint64_t, RegError> read(const BoardProfile& profile, SysReg reg) const;
    std::optional<RegError> write(const BoardProfile& profile, SysReg reg, std::uint64_t value);

    bool ns() const { return scr_el3_ns_; }
    void set_ns(bool ns) { scr_el3_ns_ = ns; }

    bool timer_masked() const { return (cntp_ctl_el0_ & kCntpCtlImask) != 0; }
    std::uint64_t cntp_ctl_el0() const { return cntp_ctl_el0_; }
    std::uint64_t cntpoff() const { return cntpoff_; }

    std::uint64_t native_gptbr() const { return native_gptbr_; }
    std::uint64_t native_gpccr() const { return native_gpccr_; }
    std::uint64_t shadow_gptbr() const { return shadow_gptbr_; }
    std::uint64_t shadow_gpccr() const { return shadow_gpccr_; }

private:
    bool scr_el3_ns_ = true;
    std::uint64_t native_gptbr_ = 0;
    std::uint64_t native_gpccr_ = 0;
    std::uint64_t shadow_gptbr_ = 0;   // AFSRx-backed dummy slot
    std::uint64_t shadow_gpccr_ = 0;   // AFSRx-backed dummy slot
    std::uint64_t cntp_ctl_el0_ = kCntpCtlEnable;
    std::uint64_t cntpoff_ = 0;
};

}  // namespace ccasim
