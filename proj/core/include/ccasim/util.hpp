// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ccasim {

/// Parses "4096", "64K", "256M", "1G" (case-insensitive suffix, powers of two).
std::optional<std::uint64_t> parse_byte_size(std::string_view text);

/// Renders a byte count with the largest exact power-of-two suffix ("256M").
std::string format_byte_size(std::uint64_t bytes);

/// Deterministic 64-bit generator (splitmix64). Used wherever reproducible
/// pseudo-random streams must not depend on library internals.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, bound). bound must be nonzero.
    std::uint64_t below(std::uint64_t bound) { return next() % bound; }

    /// Uniform double in (0, 1].
    double unit_open() {
        return (static_cast<double>(next() >> 11) + 1.0) * (1.0 / 9007199254740992.0);
    }

    bool chance(double p) { return unit_open() <= p; }

private:
    std::uint64_t state_;
};

}  // namespace ccasim
