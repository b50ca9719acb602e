// SPDX-License-Identifier: Apache-2.0
//
// Bit-exact bfloat16 arithmetic from small-integer operations, mirroring the
// 4-stage PE pipeline: unpack / signed-digit conversion (S0), integer
// multiply-add (S1), exponent clamp (S2), normalize + pack (S3).

#include "tataa/bfarith.hpp"

#include <array>

#include <stdexcept>

namespace tataa::bfarith {

const ArithConfig& default_config() {
  static const ArithConfig cfg{};
  return cfg;
}

namespace {

// Position of the highest set bit; u must be nonzero.
int msb_pos(uint32_t u) {
  int p = 0;
  while (u >> (p + 1)) ++p;
  return p;
}

// Normalize a magnitude at scale 2^22 (leading one at bit 22 means 1.m with
// a 7-bit stored mantissa) and pack with clamping. Truncates toward zero.
Bf16 normalize_pack(uint16_t s, int e_base, uint32_t mag) {
  if (mag == 0) return Bf16::zero(0);  // exact cancellation yields +0
  int p = msb_pos(mag);
  int e = e_base + (p - 22);
  if (e >= 255) return Bf16::max_finite(s);
  if (e <= 0) return Bf16::zero(s);
  uint16_t m = static_cast<uint16_t>((mag >> (p - 7)) & 0x7F);
  return Bf16::pack(s, static_cast<uint16_t>(e), m);
}

}  // namespace

Bf16 fpmul(Bf16 a, Bf16 b) {
  uint16_t s = a.sign() ^ b.sign();
  if (a.is_zero() || b.is_zero()) return Bf16::zero(s);
  int e = static_cast<int>(a.exponent()) + static_cast<int>(b.exponent()) - 127;
  // (1.ma)*(1.mb) as an 8x8 unsigned multiply; product is Q2.14.
  uint32_t p = (128u + a.mantissa()) * (128u + b.mantissa());
  uint16_t m;
  if (p >= 0x8000u) {  // product >= 2.0: shift right one, bump exponent
    e += 1;
    m = static_cast<uint16_t>((p >> 8) & 0x7F);
  } else {
    m = static_cast<uint16_t>((p >> 7) & 0x7F);
  }
  if (e >= 255) return Bf16::max_finite(s);
  if (e <= 0) return Bf16::zero(s);
  return Bf16::pack(s, static_cast<uint16_t>(e), m);
}

Bf16 fpadd(Bf16 a, Bf16 b, const ArithConfig& cfg) {
  if (b.is_zero() && a.is_zero()) return Bf16::zero(a.sign() | b.sign());
  if (b.is_zero()) return a;
  if (a.is_zero()) return b;

  uint16_t ea = a.exponent(), eb = b.exponent();
  uint16_t ez = ea > eb ? ea : eb;
  uint32_t de = ea > eb ? static_cast<uint32_t>(ea - eb) : static_cast<uint32_t>(eb - ea);

  // Signed-digit {s, 1.m} to 2's complement at scale 2^(7+15); the smaller
  // operand is aligned by the Q1.15 power-of-two multiply from the LUT.
  auto term = [&](Bf16 v, bool small) {
    int32_t mant = static_cast<int32_t>(128u + v.mantissa());
    int32_t wide;
    if (!small) {
      wide = mant << 15;
    } else if (de > 15) {
      wide = 0;
    } else {
      wide = mant * static_cast<int32_t>(cfg.shift_lut[de]);
    }
    return v.sign() ? -wide : wide;
  };
  bool a_small = ea < eb;
  int32_t sum = term(a, a_small) + term(b, !a_small);

  // Back to signed digit, then leading-one normalization.
  uint16_t s = sum < 0 ? 1 : 0;
  uint32_t mag = static_cast<uint32_t>(sum < 0 ? -sum : sum);
  return normalize_pack(s, static_cast<int>(ez), mag);
}

Bf16 fpapp(Bf16 y, bool raw, const ArithConfig& cfg) {
  // Stage 1: pure 16-bit integer arithmetic on the raw pattern.
  uint16_t t_bits = static_cast<uint16_t>(cfg.magic - (y.bits >> 1));
  Bf16 t = Bf16::from_bits(t_bits);
  if (raw) return t;
  // Stages 2-4: square via the multiplier path.
  return fpmul(t, t);
}

Bf16 fpmax(Bf16 a, Bf16 b) { return ulp_index(a) >= ulp_index(b) ? a : b; }
Bf16 fpmin(Bf16 a, Bf16 b) { return ulp_index(a) <= ulp_index(b) ? a : b; }

Bf16 exp2_floor(Bf16 v, const ArithConfig& cfg) {
  // floor(v) from the fields, saturating well past the exponent range.
  int32_t k;
  uint16_t frac_q7 = 0;
  uint16_t e = v.exponent();
  if (e == 0) {
    k = 0;
  } else {
    int ue = static_cast<int>(e) - 127;
    uint32_t mant = 128u + v.mantissa();
    uint32_t ipart;
    bool has_frac;
    if (ue < 0) {  // 0 < |v| < 1
      ipart = 0;
      frac_q7 = ue >= -7 ? static_cast<uint16_t>(mant >> -ue) : 0;
      has_frac = true;
    } else if (ue <= 7) {
      ipart = mant >> (7 - ue);
      frac_q7 = static_cast<uint16_t>((mant << ue) & 0x7F);
      has_frac = frac_q7 != 0;
    } else {
      ipart = ue >= 16 ? 0x7FFFFFu : (mant << (ue - 7));
      has_frac = false;
    }
    if (ipart > 0x1FF) ipart = 0x1FF;  // beyond any representable exponent
    if (v.sign()) {
      k = -static_cast<int32_t>(ipart) - (has_frac ? 1 : 0);
      if (has_frac) frac_q7 = static_cast<uint16_t>((128 - frac_q7) & 0x7F);
    } else {
      k = static_cast<int32_t>(ipart);
    }
  }
  int32_t er = 127 + k;
  if (er <= 0) return Bf16::zero(0);
  if (er >= 255) return Bf16::max_finite(0);
  uint16_t m = 0;
  if (cfg.exp_frac_lut) {
    // Fraction-indexed refinement at the fraction's own 7-bit resolution:
    // m = trunc((2^(f/128) - 1) * 128).
    static constexpr auto lut = [] {
      std::array<uint16_t, 128> t{};
      for (int f = 0; f < 128; ++f) {
        double frac = static_cast<double>(f) / 128.0;
        // Integer-safe: exp2 of a rational with truncation.
        t[static_cast<size_t>(f)] = static_cast<uint16_t>((__builtin_exp2(frac) - 1.0) * 128.0);
      }
      return t;
    }();
    m = lut[frac_q7 & 0x7F];
  }
  return Bf16::pack(0, static_cast<uint16_t>(er), m);
}

Bf16 fast_isqrt(Bf16 x, const ArithConfig& cfg) {
  if (x.is_zero() || x.sign()) throw std::domain_error("fast_isqrt: input must be positive");
  Bf16 t = fpapp(x, /*raw=*/true, cfg);
  Bf16 t_sq = fpapp(x, /*raw=*/false, cfg);
  Bf16 half_x = fpmul(Bf16::from_bits(kBitsMinusHalf), x);
  for (int i = 0; i < cfg.newton_iters; ++i) {
    // t' = 1.5 t - 0.5 x t^3
    Bf16 cube = fpmul(t, t_sq);
    Bf16 correction = fpmul(half_x, cube);
    t = fpadd(fpmul(Bf16::from_bits(kBitsThreeHalves), t), correction, cfg);
    t_sq = fpmul(t, t);
  }
  return t;
}

Bf16 fpdiv(Bf16 x, Bf16 y, const ArithConfig& cfg) {
  if (y.is_zero()) throw std::domain_error("fpdiv: division by zero");
  uint16_t s = x.sign() ^ y.sign();
  Bf16 ay = Bf16::pack(0, y.exponent(), y.mantissa());
  Bf16 r = fast_isqrt(ay, cfg);
  Bf16 q = fpmul(fpmul(x, r), r);
  return Bf16::pack(s, q.exponent(), q.mantissa());
}

Bf16 approx_exp(Bf16 x, const ArithConfig& cfg) {
  return exp2_floor(fpmul(x, Bf16::from_bits(kBitsInvLn2)), cfg);
}

Bf16 pade_tanh(Bf16 x, const ArithConfig& cfg) {
  const Bf16 c27 = Bf16::from_double(27.0);
  const Bf16 c9 = Bf16::from_double(9.0);
  Bf16 x2 = fpmul(x, x);
  Bf16 x3 = fpmul(x2, x);
  Bf16 num = fpadd(fpmul(c27, x), x3, cfg);
  Bf16 den = fpadd(c27, fpmul(c9, x2), cfg);
  Bf16 r = fpdiv(num, den, cfg);
  r = fpmax(r, Bf16::from_bits(kBitsMinusOne));
  r = fpmin(r, Bf16::from_bits(kBitsOne));
  return r;
}

Bf16 gelu(Bf16 x, const ArithConfig& cfg) {
  // 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
  const Bf16 c_s = Bf16::from_double(0.7978845608028654);
  const Bf16 c_k = Bf16::from_double(0.044715);
  Bf16 x2 = fpmul(x, x);
  Bf16 x3 = fpmul(x2, x);
  Bf16 u = fpmul(fpadd(x, fpmul(c_k, x3), cfg), c_s);
  Bf16 t = pade_tanh(u, cfg);
  Bf16 half_x = fpmul(Bf16::from_bits(kBitsHalf), x);
  return fpadd(half_x, fpmul(half_x, t), cfg);
}

Bf16 silu(Bf16 x, const ArithConfig& cfg) {
  // x * sigmoid(x) = x / (1 + exp(-x)), exp via the power-of-two step.
  Bf16 e = exp2_floor(fpmul(x, Bf16::from_bits(kBitsMinusInvLn2)), cfg);
  Bf16 den = fpadd(Bf16::from_bits(kBitsOne), e, cfg);
  return fpdiv(x, den, cfg);
}

}  // namespace tataa::bfarith
