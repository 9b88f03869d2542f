// SPDX-License-Identifier: Apache-2.0
#include "ccasim/board.hpp"

#include <stdexcept>

#include <json.hpp>

namespace ccasim {

using json = nlohmann::ordered_json;

BoardProfile BoardProfile::rk3588() {
    BoardProfile p;
    p.name = "rk3588";
    p.has_rme = false;
    p.has_ttst = false;
    p.has_fwb = false;
    p.has_ecv = false;
    p.core_count = 4;
    return p;
}

BoardProfile BoardProfile::fvp_rme() {
    BoardProfile p;
    p.name = "fvp-rme";
    p.has_rme = true;
    p.has_ttst = true;
    p.has_fwb = true;
    p.has_ecv = true;
    p.core_count = 4;
    return p;
}

std::optional<BoardProfile> BoardProfile::builtin(std::string_view name) {
    if (name == "rk3588") return rk3588();
    if (name == "fvp-rme") return fvp_rme();
    return std::nullopt;
}

std::string BoardProfile::to_json() const {
    json out{{"name", name},
             {"features",
              {{"rme", has_rme}, {"ttst", has_ttst}, {"fwb", has_fwb}, {"ecv", has_ecv}}},
             {"asid_partition", asid_partition_mode},
             {"cores", core_count}};
    return out.dump(2) + "\n";
}

BoardProfile BoardProfile::from_json(const std::string& text) {
    json in = json::parse(text);
    BoardProfile p;
    p.name = in.at("name").get<std::string>();
    const auto& f = in.at("features");
    p.has_rme = f.at("rme").get<bool>();
    p.has_ttst = f.at("ttst").get<bool>();
    p.has_fwb = f.at("fwb").get<bool>();
    p.has_ecv = f.at("ecv").get<bool>();
    p.asid_partition_mode = in.value("asid_partition", false);
    p.core_count = in.value("cores", 4u);
    if (in.contains("granule_size")) p.granule_size = in.at("granule_size").get<std::uint64_t>();

    if (p.granule_size != kGranuleBytes)
        throw std::runtime_error("profile granule_size must be 4096");
    if (p.core_count == 0) throw std::runtime_error("profile needs at least one core");
    // The two shipped profiles have fixed feature sets; a config that renames
    // them with different features is almost certainly a mistake.
    if (p.name == "rk3588" && (p.has_rme || p.has_ttst || p.has_fwb || p.has_ecv))
        throw std::runtime_error("profile rk3588 must have rme/ttst/fwb/ecv disabled");
    if (p.name == "fvp-rme" && !(p.has_rme && p.has_ttst && p.has_fwb && p.has_ecv))
        throw std::runtime_error("profile fvp-rme must have rme/ttst/fwb/ecv enabled");
    return p;
}

std::string_view sys_reg_name(SysReg reg) {
    switch (reg) {
        case SysReg::ScrEl3: return "SCR_EL3";
        case SysReg::GptbrEl3: return "GPTBR_EL3";
        case SysReg::GpccrEl3: return "GPCCR_EL3";
        case SysReg::CntpCtlEl0: return "CNTP_CTL_EL0";
        case SysReg::Cntpoff: return "CNTPOFF";
    }
    return "?";
}

std::optional<SysReg> sys_reg_from_name(std::string_view name) {
    if (name == "SCR_EL3") return SysReg::ScrEl3;
    if (name == "GPTBR_EL3") return SysReg::GptbrEl3;
    if (name == "GPCCR_EL3") return SysReg::GpccrEl3;
    if (name == "CNTP_CTL_EL0") return SysReg::CntpCtlEl0;
    if (name == "CNTPOFF") return SysReg::Cntpoff;
    return std::nullopt;
}

std::string_view reg_error_name(RegError e) {
    switch (e) {
        case RegError::UnknownRegister: return "UnknownRegister";
        case RegError::ReadOnlyOnProfile: return "ReadOnlyOnProfile";
        case RegError::InvalidValue: return "InvalidValue";
    }
    return "?";
}

RegisterFile RegisterFile::for_profile(const BoardProfile& profile) {
    RegisterFile regs;
    if (profile.has_rme) {
        regs.native_gpccr_ = kGpccrShadowDefault;
    } else {
        // Fixed configurable values served instead of querying the platform.
        regs.shadow_gpccr_ = kGpccrShadowDefault;
        regs.shadow_gptbr_ = 0;
    }
    regs.cntpoff_ = 0;
    return regs;
}

std::variant<std::uint64_t, RegError> RegisterFile::read(const BoardProfile& profile,
                                                         SysReg reg) const {
    switch (reg) {
        case SysReg::ScrEl3:
            return static_cast<std::uint64_t>(scr_el3_ns_ ? 1 : 0);
        case SysReg::GptbrEl3:
            return profile.has_rme ? native_gptbr_ : shadow_gptbr_;
        case SysReg::GpccrEl3:
            return profile.has_rme ? native_gpccr_ : shadow_gpccr_;
        case SysReg::CntpCtlEl0:
            return cntp_ctl_el0_;
        case SysReg::Cntpoff:
            return cntpoff_;
    }
    return RegError::UnknownRegister;
}

std::optional<RegError> RegisterFile::write(const BoardProfile& profile, SysReg reg,
                                            std::uint64_t value) {
    switch (reg) {
        case SysReg::ScrEl3:
            if (value > 1) return RegError::InvalidValue;
            scr_el3_ns_ = value != 0;
            return std::nullopt;
        case SysReg::GptbrEl3:
            (profile.has_rme ? native_gptbr_ : shadow_gptbr_) = value;
            return std::nullopt;
        case SysReg::GpccrEl3:
            (profile.has_rme ? native_gpccr_ : shadow_gpccr_) = value;
            return std::nullopt;
        case SysReg::CntpCtlEl0:
            if (value > (kCntpCtlEnable | kCntpCtlImask)) return RegError::InvalidValue;
            cntp_ctl_el0_ = value;
            return std::nullopt;
        case SysReg::Cntpoff:
            if (!profile.has_ecv) return RegError::ReadOnlyOnProfile;
            cntpoff_ = value;
            return std::nullopt;
    }
    return RegError::UnknownRegister;
}

}  // namespace ccasim
