// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>

#include "tataa/bf16.hpp"

namespace tataa::bfarith {

// Static parameters of the bfloat16-from-integer datapath.
struct ArithConfig {
  // Seed constant for the inverse-square-root approximation step.
  uint16_t magic = 0x5F37;
  // Newton refinement count for fast_isqrt / fpdiv.
  int newton_iters = 1;
  // Alignment multipliers for fpadd: shift_lut[k] encodes 2^-k in Q1.15,
  // so a right shift by k is realized as an integer multiply. Distances
  // beyond 15 make the smaller addend vanish entirely.
  std::array<uint16_t, 16> shift_lut{};
  // Optional mantissa refinement for exp2_floor (off: exponent write only).
  bool exp_frac_lut = false;

  constexpr ArithConfig() {
    for (int k = 0; k < 16; ++k) shift_lut[static_cast<size_t>(k)] = static_cast<uint16_t>(0x8000u >> k);
  }
};

const ArithConfig& default_config();

// Frequently used datapath constants, exact in bfloat16 unless noted.
inline constexpr uint16_t kBitsOne = 0x3F80;       // 1.0
inline constexpr uint16_t kBitsHalf = 0x3F00;      // 0.5
inline constexpr uint16_t kBitsMinusHalf = 0xBF00; // -0.5
inline constexpr uint16_t kBitsThreeHalves = 0x3FC0;  // 1.5
inline constexpr uint16_t kBitsMinusOne = 0xBF80;  // -1.0
// 1/ln2 with the mantissa raised by one step (1.453125) so that inputs at
// exact powers-of-two breakpoints land on the intended exponent.
inline constexpr uint16_t kBitsInvLn2 = 0x3FBA;
inline constexpr uint16_t kBitsMinusInvLn2 = 0xBFBA;

// Core primitive operations (the three PE pipeline functions).
Bf16 fpmul(Bf16 a, Bf16 b);
Bf16 fpadd(Bf16 a, Bf16 b, const ArithConfig& cfg = default_config());
Bf16 fpapp(Bf16 y, bool raw, const ArithConfig& cfg = default_config());

// Lane-level compare-select reusing the fpadd comparator path.
Bf16 fpmax(Bf16 a, Bf16 b);
Bf16 fpmin(Bf16 a, Bf16 b);

// 2^floor(v) realized as a direct exponent-field write; with cfg.exp_frac_lut
// a 16-entry table refines the mantissa from the fractional part.
Bf16 exp2_floor(Bf16 v, const ArithConfig& cfg = default_config());

// Composite operations built purely from the primitives above.
Bf16 fast_isqrt(Bf16 x, const ArithConfig& cfg = default_config());  // throws std::domain_error for x <= 0
Bf16 fpdiv(Bf16 x, Bf16 y, const ArithConfig& cfg = default_config());  // throws std::domain_error for y == 0
Bf16 approx_exp(Bf16 x, const ArithConfig& cfg = default_config());
Bf16 pade_tanh(Bf16 x, const ArithConfig& cfg = default_config());

// Scalar reference compositions of the activation chains the compiler emits.
Bf16 gelu(Bf16 x, const ArithConfig& cfg = default_config());
Bf16 silu(Bf16 x, const ArithConfig& cfg = default_config());

}  // namespace tataa::bfarith
