// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tataa/bfarith.hpp"

using namespace tataa;
using namespace tataa::bfarith;

namespace {

// Finite, canonical patterns: e in [1,254] plus the two signed zeros.
bool canonical_finite(uint16_t bits) {
  Bf16 v = Bf16::from_bits(bits);
  if (v.exponent() == 255) return false;
  if (v.exponent() == 0) return v.mantissa() == 0;
  return true;
}

Bf16 bf(double v) { return Bf16::from_double(v); }

double rel_err(double got, double want) { return std::fabs(got - want) / std::fabs(want); }

}  // namespace

TEST_CASE("field decode of known patterns") {
  Bf16 one = Bf16::from_bits(0x3F80);
  CHECK(one.sign() == 0);
  CHECK(one.exponent() == 127);
  CHECK(one.mantissa() == 0);
  CHECK(one.to_double() == 1.0);

  Bf16 z = Bf16::from_bits(0x0000);
  CHECK(z.sign() == 0);
  CHECK(z.exponent() == 0);
  CHECK(z.mantissa() == 0);
  CHECK(z.to_double() == 0.0);

  // 0x4040 by the layout formula: 2^(128-127) * (1 + 64/128) = 3.0
  Bf16 three = Bf16::from_bits(0x4040);
  CHECK(three.exponent() == 128);
  CHECK(three.mantissa() == 0x40);
  CHECK(three.to_double() == 3.0);
}

TEST_CASE("encode/decode round-trips all 65536 patterns") {
  for (uint32_t b = 0; b <= 0xFFFF; ++b) {
    Bf16 v = Bf16::from_bits(static_cast<uint16_t>(b));
    CHECK(Bf16::pack(v.sign(), v.exponent(), v.mantissa()).bits == b);
  }
}

TEST_CASE("fpmul identity and exact products") {
  CHECK(fpmul(bf(2.0), bf(3.0)).bits == 0x40C0);  // 6.0
  Bf16 one = Bf16::one();
  for (uint32_t b = 0; b <= 0xFFFF; ++b) {
    if (!canonical_finite(static_cast<uint16_t>(b))) continue;
    Bf16 x = Bf16::from_bits(static_cast<uint16_t>(b));
    CHECK(fpmul(one, x).bits == x.bits);
  }
}

TEST_CASE("fpadd identities") {
  CHECK(fpadd(bf(1.0), bf(1.0)).bits == 0x4000);  // 2.0
  CHECK(fpadd(bf(1.0), bf(-1.0)).bits == 0x0000); // exact cancellation -> +0
  Bf16 pz = Bf16::zero();
  for (uint32_t b = 0; b <= 0xFFFF; ++b) {
    if (!canonical_finite(static_cast<uint16_t>(b))) continue;
    Bf16 x = Bf16::from_bits(static_cast<uint16_t>(b));
    CHECK(fpadd(x, pz).bits == x.bits);
  }
}

TEST_CASE("fpmul/fpadd commute bit-exactly on random pairs") {
  std::mt19937 rng(7);
  std::uniform_int_distribution<uint32_t> d(0, 0xFFFF);
  for (int t = 0; t < 200000; ++t) {
    Bf16 a = Bf16::from_bits(static_cast<uint16_t>(d(rng)));
    Bf16 b = Bf16::from_bits(static_cast<uint16_t>(d(rng)));
    CHECK(fpmul(a, b).bits == fpmul(b, a).bits);
    CHECK(fpadd(a, b).bits == fpadd(b, a).bits);
  }
}

namespace {

// Random finite operand: the kernels never produce e=255, so the rounding
// property is quantified over finite inputs.
template <class Rng>
Bf16 random_finite(Rng& rng) {
  std::uniform_int_distribution<uint32_t> d(0, 0xFFFF);
  for (;;) {
    Bf16 v = Bf16::from_bits(static_cast<uint16_t>(d(rng)));
    if (v.exponent() != 255) return v;
  }
}

}  // namespace

TEST_CASE("fpmul within 1 ulp of round-to-nearest-even reference") {
  // 2^12-sample grid plus random pairs.
  std::mt19937 rng(11);
  auto check_pair = [&](Bf16 a, Bf16 b) {
    if (a.exponent() == 255 || b.exponent() == 255) return;
    Bf16 got = fpmul(a, b);
    Bf16 want = Bf16::from_bits(oracle::ref_mul(a, b));
    CHECK(ulp_distance(got, want) <= 1);
  };
  for (uint32_t i = 0; i < 64; ++i)
    for (uint32_t j = 0; j < 64; ++j)
      check_pair(Bf16::from_bits(static_cast<uint16_t>(i * 1021)), Bf16::from_bits(static_cast<uint16_t>(j * 1021)));
  for (int t = 0; t < 200000; ++t) check_pair(random_finite(rng), random_finite(rng));
}

TEST_CASE("fpadd within 1 ulp of reference; exact when exponents equal and no rounding") {
  std::mt19937 rng(13);
  for (int t = 0; t < 200000; ++t) {
    Bf16 a = random_finite(rng);
    Bf16 b = random_finite(rng);
    Bf16 got = fpadd(a, b);
    Bf16 want = Bf16::from_bits(oracle::ref_add(a, b));
    CHECK(ulp_distance(got, want) <= 1);
  }
  // Equal exponents, same sign, mantissa sum even: representable exactly.
  for (uint32_t e = 1; e <= 253; e += 7)
    for (uint32_t m = 0; m < 128; m += 5) {
      Bf16 a = Bf16::pack(0, static_cast<uint16_t>(e), static_cast<uint16_t>(m));
      Bf16 b = Bf16::pack(0, static_cast<uint16_t>(e), static_cast<uint16_t>(m ^ 2u));
      double exact = a.to_double() + b.to_double();
      Bf16 got = fpadd(a, b);
      CHECK(got.to_double() == exact);
    }
}

TEST_CASE("fpapp seed arithmetic and exhaustive oracle equality") {
  // 1.0: 0x5F37 - (0x3F80 >> 1) = 0x5F37 - 0x1FC0 = 0x3F77
  Bf16 t = fpapp(bf(1.0), true);
  CHECK(t.bits == 0x3F77);
  CHECK(t.to_double() == doctest::Approx(0.96484375).epsilon(1e-12));
  CHECK(fpapp(bf(1.0), false).bits == fpmul(t, t).bits);

  for (uint32_t b = 0; b <= 0xFFFF; ++b) {
    Bf16 y = Bf16::from_bits(static_cast<uint16_t>(b));
    CHECK(fpapp(y, true).bits == oracle::isqrt_seed_bits(static_cast<uint16_t>(b)));
    Bf16 seed = Bf16::from_bits(oracle::isqrt_seed_bits(static_cast<uint16_t>(b)));
    CHECK(fpapp(y, false).bits == fpmul(seed, seed).bits);
  }
}

TEST_CASE("fpadd alignment LUT equals direct shifts") {
  const auto& lut = default_config().shift_lut;
  for (int k = 0; k < 16; ++k)
    CHECK(static_cast<double>(lut[static_cast<size_t>(k)]) / 32768.0 == std::ldexp(1.0, -k));
}

TEST_CASE("fast_isqrt accuracy") {
  CHECK(rel_err(fast_isqrt(bf(1.0)).to_double(), 1.0) < 2e-2);
  CHECK(rel_err(fast_isqrt(bf(4.0)).to_double(), 0.5) < 2e-2);
  CHECK_THROWS_AS(fast_isqrt(bf(-1.0)), std::domain_error);
  CHECK_THROWS_AS(fast_isqrt(bf(0.0)), std::domain_error);

  // One-Newton-iteration relative error bound over [2^-10, 2^10].
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> du(-10.0, 10.0);
  for (int t = 0; t < 20000; ++t) {
    double x = std::pow(2.0, du(rng));
    Bf16 xb = bf(x);
    double want = 1.0 / std::sqrt(xb.to_double());
    CHECK(rel_err(fast_isqrt(xb).to_double(), want) <= 3.5e-2);
  }
}

TEST_CASE("fast_isqrt RMSE over sweep ranges") {
  auto rmse_over = [](double lo, double hi) {
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> du(std::log(lo), std::log(hi));
    double se = 0.0;
    const int n = 10000;
    for (int t = 0; t < n; ++t) {
      Bf16 xb = Bf16::from_double(std::exp(du(rng)));
      double err = fast_isqrt(xb).to_double() - 1.0 / std::sqrt(xb.to_double());
      se += err * err;
    }
    return std::sqrt(se / n);
  };
  // Documented default sweep range for the approximation report.
  double rmse_doc = rmse_over(1.0, 16.0);
  MESSAGE("fast_isqrt RMSE [1,16] = ", rmse_doc);
  CHECK(rmse_doc <= 5e-3);
  // Wider range: absolute error grows with the output magnitude near the low
  // end; the truncating composition cannot do better than ~0.4% relative.
  double rmse_wide = rmse_over(0.1, 10.0);
  MESSAGE("fast_isqrt RMSE [0.1,10] = ", rmse_wide);
  CHECK(rmse_wide <= 7e-3);
}

TEST_CASE("fpdiv examples and sign split") {
  CHECK(rel_err(fpdiv(bf(6.0), bf(3.0)).to_double(), 2.0) < 3e-2);
  CHECK(rel_err(fpdiv(bf(1.0), bf(-4.0)).to_double(), -0.25) < 3e-2);
  CHECK_THROWS_AS(fpdiv(bf(1.0), bf(0.0)), std::domain_error);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> dx(-8.0, 8.0);
  for (int t = 0; t < 5000; ++t) {
    double x = dx(rng);
    Bf16 xb = bf(x);
    if (xb.is_zero()) continue;
    CHECK(rel_err(fpdiv(xb, bf(1.0)).to_double(), xb.to_double()) < 3e-2);
  }
}

TEST_CASE("approx_exp examples and monotonicity") {
  CHECK(approx_exp(bf(0.0)).to_double() == 1.0);
  CHECK(approx_exp(bf(0.6953125)).to_double() == 2.0);  // just above ln 2
  CHECK(approx_exp(bf(0.6931)).to_double() == 2.0);
  CHECK(approx_exp(bf(-1.0)).to_double() == 0.25);

  double prev = -1.0;
  for (int32_t i = -30000; i <= 30000; i += 7) {
    Bf16 x = bf(i / 1000.0);
    double v = approx_exp(x).to_double();
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("exp2_floor LUT refinement improves accuracy when enabled") {
  ArithConfig lut_cfg;
  lut_cfg.exp_frac_lut = true;
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> dx(-4.0, 4.0);
  double se_plain = 0, se_lut = 0;
  for (int t = 0; t < 5000; ++t) {
    Bf16 x = bf(dx(rng));
    double want = std::exp2(x.to_double());
    double plain = exp2_floor(x).to_double();
    double lut = exp2_floor(x, lut_cfg).to_double();
    se_plain += (plain - want) * (plain - want);
    se_lut += (lut - want) * (lut - want);
  }
  CHECK(se_lut < se_plain / 4.0);
}

TEST_CASE("pade_tanh examples, clamp, odd symmetry") {
  CHECK(pade_tanh(bf(0.0)).to_double() == 0.0);
  // Pre-clamp value 1270/927 ~ 1.370 clamps to one.
  CHECK(pade_tanh(bf(10.0)).to_double() == 1.0);
  CHECK(pade_tanh(bf(-10.0)).to_double() == -1.0);

  for (uint32_t b = 0; b <= 0x7FFF; b += 3) {
    if (!canonical_finite(static_cast<uint16_t>(b))) continue;
    Bf16 x = Bf16::from_bits(static_cast<uint16_t>(b));
    Bf16 nx = Bf16::from_bits(static_cast<uint16_t>(b | 0x8000));
    Bf16 p = pade_tanh(x);
    Bf16 q = pade_tanh(nx);
    if (p.is_zero()) {
      CHECK(q.is_zero());
    } else {
      CHECK(q.bits == (p.bits ^ 0x8000));
    }
    CHECK(std::fabs(p.to_double()) <= 1.0);
  }
}

TEST_CASE("pade_tanh RMSE over [-4,4]") {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> dx(-4.0, 4.0);
  double se = 0.0;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    Bf16 x = bf(dx(rng));
    double err = pade_tanh(x).to_double() - std::tanh(x.to_double());
    se += err * err;
  }
  double rmse = std::sqrt(se / n);
  MESSAGE("pade_tanh RMSE [-4,4] = ", rmse);
  CHECK(rmse <= 2e-2);
}

TEST_CASE("gelu composition RMSE over documented range") {
  std::mt19937 rng(37);
  std::uniform_real_distribution<double> dx(-1.0, 1.0);
  double se = 0.0;
  const int n = 10000;
  for (int t = 0; t < n; ++t) {
    Bf16 x = bf(dx(rng));
    double xv = x.to_double();
    double want = 0.5 * xv * (1.0 + std::erf(xv / std::sqrt(2.0)));
    double err = gelu(x).to_double() - want;
    se += err * err;
  }
  double rmse = std::sqrt(se / n);
  MESSAGE("gelu RMSE [-1,1] = ", rmse);
  CHECK(rmse <= 5e-3);
}

TEST_CASE("max/min compare-select") {
  CHECK(fpmax(bf(2.0), bf(-3.0)).to_double() == 2.0);
  CHECK(fpmin(bf(2.0), bf(-3.0)).to_double() == -3.0);
  CHECK(fpmax(bf(-1.0), bf(-0.5)).to_double() == -0.5);
}
