// SPDX-License-Identifier: Apache-2.0
#include "ccasim/ratio.hpp"

namespace ccasim {

namespace {

std::string int128_to_string(__int128 v) {
    if (v == 0) return "0";
    bool neg = v < 0;
    unsigned __int128 u = neg ? static_cast<unsigned __int128>(-(v + 1)) + 1 : static_cast<unsigned __int128>(v);
    std::string out;
    while (u != 0) {
        out.push_back(static_cast<char>('0' + static_cast<int>(u % 10)));
        u /= 10;
    }
    if (neg) out.push_back('-');
    return {out.rbegin(), out.rend()};
}

}  // namespace

std::string Ratio::to_decimal_string(int max_frac_digits) const {
    __int128 n = num_;
    bool neg = n < 0;
    if (neg) n = -n;
    __int128 whole = n / den_;
    __int128 rem = n % den_;
    std::string out = (neg && (whole != 0 || rem != 0)) ? "-" : "";
    out += int128_to_string(whole);
    if (rem == 0) return out;

    std::string frac;
    for (int i = 0; i < max_frac_digits && rem != 0; ++i) {
        rem *= 10;
        frac.push_back(static_cast<char>('0' + static_cast<int>(rem / den_)));
        rem %= den_;
    }
    // round the last emitted digit if the remainder is at least half
    if (rem * 2 >= den_ && !frac.empty()) {
        int i = static_cast<int>(frac.size()) - 1;
        while (i >= 0) {
            if (frac[i] != '9') {
                frac[i]++;
                break;
            }
            frac[i] = '0';
            --i;
        }
        if (i < 0) {
            // carried past the fractional part
            out = (neg ? "-" : "") + int128_to_string(whole + 1);
        }
    }
    while (!frac.empty() && frac.back() == '0') frac.pop_back();
    if (frac.empty()) return out;
    return out + "." + frac;
}

}  // namespace ccasim
