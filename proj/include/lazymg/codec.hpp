#pragma once

#include <cstdint>
#include <span>

#include "lazymg/types.hpp"

namespace lazymg {

/// Variable-precision value format. p3 = 0 stores nothing, p3 = 8 raw IEEE
/// doubles. For p3 in [2,7]: 1 sign bit, m = 8(p3-1)-1 mantissa bits
/// (MSB-first, truncated toward zero, implicit leading 1), then one byte of
/// two's-complement unbiased exponent clamped to [-128,127]. Zero is encoded
/// as sign 0, mantissa 0, exponent -128.
namespace codec {

inline constexpr int max_p3 = 8;

inline constexpr int encoded_size(int p3) { return p3; }
inline constexpr int mantissa_bits(int p3) { return 8 * (p3 - 1) - 1; }

/// Writes exactly p3 bytes. Throws protocol_error for non-finite x.
void encode_value(double x, int p3, uint8_t* out);

/// Reads exactly p3 bytes (p3 > 0).
double decode_value(const uint8_t* in, int p3);

inline double roundtrip(double x, int p3) {
    if (p3 == 0) return 0.0;
    uint8_t buf[8];
    encode_value(x, p3, buf);
    return decode_value(buf, p3);
}

/// Smallest p3 in {0,2,...,8} whose round-trip keeps every entry within
/// delta_max absolute error; 0 iff every magnitude is <= delta_max.
int choose_precision(std::span<const double> surplus, double delta_max);

}  // namespace codec
}  // namespace lazymg
