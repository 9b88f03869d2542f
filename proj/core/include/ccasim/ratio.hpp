// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ccasim {

/// Exact rational on 128-bit integers. Cost weights calibrated from measured
/// data are not always integral (e.g. a per-granule weight solved from two
/// boot measurements); carrying them as rationals keeps every accumulated
/// total reproducible bit for bit, with rounding deferred to report time.
class Ratio {
public:
    constexpr Ratio() : num_(0), den_(1) {}
    constexpr Ratio(std::int64_t value) : num_(value), den_(1) {}
    Ratio(std::int64_t numerator, std::int64_t denominator) : num_(numerator), den_(denominator) {
        if (denominator == 0) throw std::domain_error("Ratio: zero denominator");
        normalize();
    }

    static Ratio from_parts(std::int64_t numerator, std::int64_t denominator) {
        return Ratio(numerator, denominator);
    }

    bool is_zero() const { return num_ == 0; }
    bool is_integer() const { return den_ == 1; }
    bool is_negative() const { return num_ < 0; }

    std::int64_t numerator() const { return checked64(num_, "numerator"); }
    std::int64_t denominator() const { return checked64(den_, "denominator"); }

    /// Nearest integer, ties away from zero. Used only when emitting reports.
    std::int64_t rounded() const {
        __int128 n = num_;
        __int128 d = den_;
        __int128 q = (n >= 0) ? (2 * n + d) / (2 * d) : -((-2 * n + d) / (2 * d));
        return checked64(q, "rounded value");
    }

    double to_double() const {
        return static_cast<double>(num_) / static_cast<double>(den_);
    }

    Ratio operator+(const Ratio& o) const { return make(num_ * o.den_ + o.num_ * den_, den_ * o.den_); }
    Ratio operator-(const Ratio& o) const { return make(num_ * o.den_ - o.num_ * den_, den_ * o.den_); }
    Ratio operator*(const Ratio& o) const { return make(num_ * o.num_, den_ * o.den_); }
    Ratio operator/(const Ratio& o) const {
        if (o.num_ == 0) throw std::domain_error("Ratio: division by zero");
        return make(num_ * o.den_, den_ * o.num_);
    }
    Ratio operator*(std::int64_t k) const { return make(num_ * k, den_); }
    Ratio operator-() const { return make(-num_, den_); }

    Ratio& operator+=(const Ratio& o) { *this = *this + o; return *this; }
    Ratio& operator-=(const Ratio& o) { *this = *this - o; return *this; }
    Ratio& operator*=(const Ratio& o) { *this = *this * o; return *this; }

    bool operator==(const Ratio& o) const { return num_ == o.num_ && den_ == o.den_; }
    bool operator!=(const Ratio& o) const { return !(*this == o); }
    bool operator<(const Ratio& o) const { return num_ * o.den_ < o.num_ * den_; }
    bool operator<=(const Ratio& o) const { return num_ * o.den_ <= o.num_ * den_; }
    bool operator>(const Ratio& o) const { return o < *this; }
    bool operator>=(const Ratio& o) const { return o <= *this; }

    /// Decimal rendering with a bounded number of fractional digits,
    /// trailing zeros trimmed. Exact integers print without a point.
    std::string to_decimal_string(int max_frac_digits = 6) const;

private:
    __int128 num_;
    __int128 den_;  // always > 0

    constexpr Ratio(__int128 n, __int128 d, int) : num_(n), den_(d) {}

    static Ratio make(__int128 n, __int128 d) {
        Ratio r(n, d, 0);
        r.normalize();
        return r;
    }

    static __int128 gcd128(__int128 a, __int128 b) {
        if (a < 0) a = -a;
        if (b < 0) b = -b;
        while (b != 0) {
            __int128 t = a % b;
            a = b;
            b = t;
        }
        return a;
    }

    static std::int64_t checked64(__int128 v, const char* what) {
        if (v > INT64_MAX || v < INT64_MIN)
            throw std::overflow_error(std::string("Ratio: ") + what + " exceeds 64 bits");
        return static_cast<std::int64_t>(v);
    }

    void normalize() {
        if (den_ < 0) {
            num_ = -num_;
            den_ = -den_;
        }
        __int128 g = gcd128(num_, den_);
        if (g > 1) {
            num_ /= g;
            den_ /= g;
        }
        if (num_ == 0) den_ = 1;
    }
};

inline Ratio operator*(std::int64_t k, const Ratio& r) { return r * k; }

}  // namespace ccasim
