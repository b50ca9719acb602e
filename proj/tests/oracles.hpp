// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference implementations, kept independent of the library paths
// they check.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "tataa/bf16.hpp"

namespace oracle {

// Round-to-nearest-even conversion of an exact 64-bit real to bfloat16,
// with the toolchain's conventions: subnormals flush to zero, magnitudes at
// or above 2^128 saturate to the max finite pattern (e=254, m=0x7F).
inline uint16_t bf16_rne(double v) {
  uint16_t s = std::signbit(v) ? 1u : 0u;
  uint16_t sbit = static_cast<uint16_t>(s << 15);
  if (v == 0.0) return sbit;
  double av = std::fabs(v);
  int e2 = 0;
  double frac = std::frexp(av, &e2);  // av = frac * 2^e2, frac in [0.5,1)
  int be = e2 - 1 + 127;
  // Scale the significand to 7 fraction bits and round half to even.
  double scaled = frac * 256.0;  // in [128, 256)
  double fl = std::floor(scaled);
  double rem = scaled - fl;
  int64_t mant = static_cast<int64_t>(fl);
  if (rem > 0.5 || (rem == 0.5 && (mant & 1))) mant += 1;
  if (mant == 256) {
    mant = 128;
    be += 1;
  }
  if (be >= 255) return static_cast<uint16_t>(sbit | (254u << 7) | 0x7Fu);
  if (be <= 0) return sbit;
  return static_cast<uint16_t>(sbit | (static_cast<uint16_t>(be) << 7) |
                               static_cast<uint16_t>(mant - 128));
}

// Reference products/sums: exact in double (bf16 has 8 significant bits, so
// products need 16 and sums at most ~24), then rounded to nearest even.
inline uint16_t ref_mul(tataa::Bf16 a, tataa::Bf16 b) {
  return bf16_rne(a.to_double() * b.to_double());
}
inline uint16_t ref_add(tataa::Bf16 a, tataa::Bf16 b) {
  return bf16_rne(a.to_double() + b.to_double());
}

// Independent restatement of the inverse-sqrt seed: view as 16-bit integer,
// halve, subtract from the magic constant. Written with plain unsigned
// arithmetic (mod 2^16) rather than the library's field types.
inline uint16_t isqrt_seed_bits(uint16_t input_bits) {
  unsigned t = 0x5F37u - (static_cast<unsigned>(input_bits) / 2u);
  return static_cast<uint16_t>(t & 0xFFFFu);
}

// Naive integer matmul, k-ascending accumulation, optional saturation width.
inline std::vector<int32_t> matmul_i8(const std::vector<int8_t>& x, const std::vector<int8_t>& y,
                                      int m, int k, int n, int acc_bits = 32) {
  int64_t lo = -(int64_t(1) << (acc_bits - 1));
  int64_t hi = (int64_t(1) << (acc_bits - 1)) - 1;
  std::vector<int32_t> z(static_cast<size_t>(m) * static_cast<size_t>(n), 0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      int64_t acc = 0;
      for (int kk = 0; kk < k; ++kk) {
        acc += int64_t(x[static_cast<size_t>(i) * static_cast<size_t>(k) + static_cast<size_t>(kk)]) *
               int64_t(y[static_cast<size_t>(kk) * static_cast<size_t>(n) + static_cast<size_t>(j)]);
        if (acc > hi) acc = hi;
        if (acc < lo) acc = lo;
      }
      z[static_cast<size_t>(i) * static_cast<size_t>(n) + static_cast<size_t>(j)] = static_cast<int32_t>(acc);
    }
  return z;
}

}  // namespace oracle
