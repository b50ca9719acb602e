// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>

namespace tataa {

// bfloat16 value manipulated only through its integer fields.
// Layout: bit 15 = sign, bits 14..7 = biased exponent (bias 127),
// bits 6..0 = stored mantissa (hidden leading one when 0 < e < 255).
//
// Conventions used throughout the toolchain:
//   e == 0   -> zero (subnormal patterns are flushed on use)
//   e == 255 -> saturated overflow magnitude, never produced by kernels
// No NaN/Inf semantics anywhere.
struct Bf16 {
  uint16_t bits = 0;

  static constexpr Bf16 from_bits(uint16_t b) { return Bf16{b}; }

  constexpr uint16_t sign() const { return static_cast<uint16_t>(bits >> 15); }
  constexpr uint16_t exponent() const { return static_cast<uint16_t>((bits >> 7) & 0xFF); }
  constexpr uint16_t mantissa() const { return static_cast<uint16_t>(bits & 0x7F); }
  constexpr bool is_zero() const { return exponent() == 0; }

  static constexpr Bf16 pack(uint16_t s, uint16_t e, uint16_t m) {
    return Bf16{static_cast<uint16_t>(((s & 1u) << 15) | ((e & 0xFFu) << 7) | (m & 0x7Fu))};
  }

  // Largest finite magnitude the kernels clamp to (e=254, m=0x7F).
  static constexpr Bf16 max_finite(uint16_t s = 0) { return pack(s, 254, 0x7F); }
  static constexpr Bf16 zero(uint16_t s = 0) { return pack(s, 0, 0); }
  static constexpr Bf16 one() { return from_bits(0x3F80); }

  double to_double() const {
    uint16_t e = exponent();
    if (e == 0) return sign() ? -0.0 : 0.0;
    double mag = std::ldexp(1.0 + mantissa() / 128.0, static_cast<int>(e) - 127);
    return sign() ? -mag : mag;
  }

  // Truncating conversion: mantissa rounded toward zero, subnormals flushed
  // to zero, overflow clamped to the max finite magnitude.
  static Bf16 from_double(double v) {
    uint16_t s = std::signbit(v) ? 1 : 0;
    if (v == 0.0 || std::isnan(v)) return zero(s);
    double av = std::fabs(v);
    int e2 = 0;
    double frac = std::frexp(av, &e2);  // av = frac * 2^e2, frac in [0.5, 1)
    int be = e2 - 1 + 127;
    if (be >= 255) return max_finite(s);
    if (be <= 0) return zero(s);
    auto m = static_cast<uint16_t>((frac * 2.0 - 1.0) * 128.0);  // truncate
    return pack(s, static_cast<uint16_t>(be), m);
  }

  friend constexpr bool operator==(Bf16 a, Bf16 b) { return a.bits == b.bits; }
  friend constexpr bool operator!=(Bf16 a, Bf16 b) { return a.bits != b.bits; }
};

// Signed-magnitude ordering index: monotone in value, treats +0/-0 as equal.
// Subnormal codes flush to the zero class, so zero and the smallest normal
// are adjacent representable values (distance one).
constexpr int32_t ulp_index(Bf16 x) {
  int32_t mag = x.bits & 0x7FFF;
  mag = (mag >> 7) == 0 ? 0 : mag - 127;
  return x.sign() ? -mag : mag;
}

constexpr int32_t ulp_distance(Bf16 a, Bf16 b) {
  int32_t d = ulp_index(a) - ulp_index(b);
  return d < 0 ? -d : d;
}

}  // namespace tataa
