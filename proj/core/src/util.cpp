// SPDX-License-Identifier: Apache-2.0
#include "ccasim/util.hpp"

#include <cctype>

namespace ccasim {

std::optional<std::uint64_t> parse_byte_size(std::string_view text) {
    if (text.empty()) return std::nullopt;
    std::uint64_t multiplier = 1;
    char last = text.back();
    switch (std::toupper(static_cast<unsigned char>(last))) {
        case 'K': multiplier = 1024ULL; text.remove_suffix(1); break;
        case 'M': multiplier = 1024ULL * 1024; text.remove_suffix(1); break;
        case 'G': multiplier = 1024ULL * 1024 * 1024; text.remove_suffix(1); break;
        default: break;
    }
    if (text.empty()) return std::nullopt;
    std::uint64_t value = 0;
    for (char c : text) {
        if (!std::isdigit(static_cast<unsigned char>(c))) return std::nullopt;
        value = value * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return value * multiplier;
}

std::string format_byte_size(std::uint64_t bytes) {
    constexpr std::uint64_t kGib = 1024ULL * 1024 * 1024;
    constexpr std::uint64_t kMib = 1024ULL * 1024;
    if (bytes >= kGib && bytes % kGib == 0) return std::to_string(bytes / kGib) + "G";
    if (bytes >= kMib && bytes % kMib == 0) return std::to_string(bytes / kMib) + "M";
    if (bytes >= 1024 && bytes % 1024 == 0) return std::to_string(bytes / 1024) + "K";
    return std::to_string(bytes);
}

}  // namespace ccasim
