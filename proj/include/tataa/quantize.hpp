// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "tataa/bf16.hpp"

namespace tataa::quantize {

// Static symmetric per-tensor scales. Calibration works in 64-bit reals;
// the on-chip units consume them as bfloat16 / preformed multipliers.
struct QuantParams {
  double sx = 1.0;
  double sy = 1.0;
  double sz = 1.0;
};

// int8 tensor with its static scale, elements in [-127, 127], row-major.
struct QTensor {
  std::vector<int8_t> data;
  std::vector<int64_t> shape;
  double scale = 1.0;
};

// Floor applied so all-zero calibration tensors still yield a usable scale.
inline constexpr double kScaleEpsilon = 1e-12;

// Per-tensor max-abs calibration: S = max|x| / 127 over every sample.
double calibrate_scale(const std::vector<std::vector<double>>& samples);  // throws std::invalid_argument if empty

// q = clamp(floor(x / S), -127, 127), floor toward minus infinity.
QTensor quantize_tensor(const std::vector<double>& x, const std::vector<int64_t>& shape,
                        double scale);  // throws std::invalid_argument if scale <= 0
int8_t quantize_value(double x, double scale);

// q_z = clamp(floor(acc * Sx*Sy/Sz), -127, 127); the combined multiplier is
// formed once, as the CONFIG path does.
int8_t requantize(int32_t acc, const QuantParams& p);
int8_t requantize_premul(int32_t acc, double multiplier);

// acc * Sx*Sy as a truncated bfloat16 (the int -> bfloat16 unit mode).
Bf16 dequantize_to_bf16(int32_t acc, double sx, double sy);
Bf16 dequantize_premul(int32_t acc, double multiplier);

// clamp(floor(value(v) / Sz), -127, 127) (the bfloat16 -> int8 unit mode).
int8_t bf16_to_int8(Bf16 v, double sz);  // throws std::invalid_argument if sz <= 0

}  // namespace tataa::quantize
