#include "lazymg/codec.hpp"

#include <cmath>
#include <cstring>

namespace lazymg::codec {

void encode_value(double x, int p3, uint8_t* out) {
    if (p3 == 0) return;
    if (!std::isfinite(x)) throw protocol_error("cannot encode non-finite operator entry");
    if (p3 == max_p3) {
        std::memcpy(out, &x, 8);
        return;
    }

    const int m = mantissa_bits(p3);
    uint64_t frac_bits = 0;
    int sign = 0;
    int e_hat = -128;
    if (x != 0.0) {
        sign = std::signbit(x) ? 1 : 0;
        int e;
        double f = std::frexp(std::fabs(x), &e);  // f in [0.5,1)
        e -= 1;                                   // |x| = 2f * 2^e, 2f in [1,2)
        double frac = 2.0 * f - 1.0;              // in [0,1)
        if (e < -128) {
            e_hat = -128;
        } else if (e > 127) {
            e_hat = 127;
        } else {
            e_hat = e;
        }
        // truncation toward zero: top m fraction bits
        frac_bits = static_cast<uint64_t>(std::ldexp(frac, m));
    }

    // sign is the MSB of byte 0, mantissa follows MSB-first, exponent last
    uint64_t packed = (static_cast<uint64_t>(sign) << m) | frac_bits;
    int total_bits = m + 1;  // fills p3-1 bytes exactly
    for (int b = 0; b < p3 - 1; ++b) {
        int shift = total_bits - 8 * (b + 1);
        out[b] = static_cast<uint8_t>(packed >> shift);
    }
    out[p3 - 1] = static_cast<uint8_t>(static_cast<int8_t>(e_hat));
}

double decode_value(const uint8_t* in, int p3) {
    if (p3 == max_p3) {
        double x;
        std::memcpy(&x, in, 8);
        return x;
    }
    const int m = mantissa_bits(p3);
    uint64_t packed = 0;
    for (int b = 0; b < p3 - 1; ++b) packed = (packed << 8) | in[b];
    int sign = static_cast<int>((packed >> m) & 1u);
    uint64_t frac_bits = packed & ((uint64_t{1} << m) - 1);
    int e_hat = static_cast<int8_t>(in[p3 - 1]);
    if (sign == 0 && frac_bits == 0 && e_hat == -128) return 0.0;
    double mant = 1.0 + std::ldexp(static_cast<double>(frac_bits), -m);
    double v = std::ldexp(mant, e_hat);
    return sign ? -v : v;
}

int choose_precision(std::span<const double> surplus, double delta_max) {
    bool all_small = true;
    for (double v : surplus) {
        if (std::fabs(v) > delta_max) {
            all_small = false;
            break;
        }
    }
    if (all_small) return 0;
    for (int p3 = 2; p3 < max_p3; ++p3) {
        bool ok = true;
        for (double v : surplus) {
            if (std::fabs(roundtrip(v, p3) - v) > delta_max) {
                ok = false;
                break;
            }
        }
        if (ok) return p3;
    }
    return max_p3;
}

}  // namespace lazymg::codec
