// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "tataa/quantize.hpp"

using namespace tataa;
using namespace tataa::quantize;

TEST_CASE("calibrate_scale") {
  CHECK(calibrate_scale({{0.0, 0.0}}) == kScaleEpsilon);
  CHECK(calibrate_scale({{-2.54, 1.0}}) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK_THROWS_AS(calibrate_scale({}), std::invalid_argument);

  // Max is order-invariant across many calibration tensors.
  std::mt19937 rng(3);
  std::vector<std::vector<double>> samples;
  for (int t = 0; t < 64; ++t) {
    std::vector<double> s(100);
    std::uniform_real_distribution<double> d(-5.0, 5.0);
    for (auto& v : s) v = d(rng);
    samples.push_back(s);
  }
  double s1 = calibrate_scale(samples);
  std::reverse(samples.begin(), samples.end());
  CHECK(calibrate_scale(samples) == s1);
}

TEST_CASE("quantize_tensor floor semantics") {
  CHECK(quantize_value(0.0, 0.05) == 0);
  CHECK(quantize_value(1.26, 0.05) == 25);    // floor(25.2)
  CHECK(quantize_value(-1.26, 0.05) == -26);  // floor(-25.2), not truncation
  CHECK_THROWS_AS(quantize_tensor({1.0}, {1}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(quantize_tensor({1.0}, {1}, -1.0), std::invalid_argument);

  auto q = quantize_tensor({0.0, 1.26, -1.26, 1e9, -1e9}, {5}, 0.05);
  CHECK(q.data == std::vector<int8_t>{0, 25, -26, 127, -127});
}

TEST_CASE("requantize examples and clamping") {
  QuantParams p{0.1, 0.1, 0.5};
  CHECK(requantize(0, p) == 0);
  CHECK(requantize(100, p) == 2);      // floor(100*0.01/0.5)
  CHECK(requantize(10000, p) == 127);  // floor(200) clamps
  CHECK(requantize(-10000, p) == -127);
}

TEST_CASE("requantize/quantize agree with 64-bit-real brute force") {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> ds(1e-4, 2.0);
  std::uniform_int_distribution<int32_t> da(-2000000, 2000000);
  std::uniform_real_distribution<double> dx(-300.0, 300.0);
  for (int t = 0; t < 200000; ++t) {
    QuantParams p{ds(rng), ds(rng), ds(rng)};
    int32_t acc = da(rng);
    double exact = std::floor(acc * (p.sx * p.sy / p.sz));
    int8_t want = static_cast<int8_t>(std::clamp(exact, -127.0, 127.0));
    CHECK(requantize(acc, p) == want);

    double x = dx(rng);
    double s = ds(rng);
    double eq = std::clamp(std::floor(x / s), -127.0, 127.0);
    CHECK(quantize_value(x, s) == static_cast<int8_t>(eq));
  }
}

TEST_CASE("quantize/dequantize round trip error bounded by the step") {
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> ds(1e-3, 1.0);
  for (int t = 0; t < 20000; ++t) {
    double s = ds(rng);
    std::uniform_real_distribution<double> dx(-127.0 * s, 127.0 * s);
    double x = dx(rng);
    double back = quantize_value(x, s) * s;
    CHECK(std::fabs(x - back) < s);
  }
}

TEST_CASE("dequantize_to_bf16") {
  CHECK(dequantize_to_bf16(0, 0.5, 0.5).bits == 0x0000);
  CHECK(dequantize_to_bf16(64, 0.125, 0.125).bits == 0x3F80);  // 64/64 == 1.0 exactly
  // acc=100, SxSy=0.01: within 1 ulp of bf16(1.0)
  Bf16 v = dequantize_to_bf16(100, 0.1, 0.1);
  CHECK(ulp_distance(v, Bf16::one()) <= 1);
}

TEST_CASE("bf16_to_int8") {
  CHECK(bf16_to_int8(Bf16::from_double(0.0), 0.25) == 0);
  CHECK(bf16_to_int8(Bf16::one(), 1.0 / 127.0) == 127);
  CHECK(bf16_to_int8(Bf16::from_double(-0.5), 0.25) == -2);
  CHECK_THROWS_AS(bf16_to_int8(Bf16::one(), 0.0), std::invalid_argument);
}
