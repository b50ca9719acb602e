// SPDX-License-Identifier: Apache-2.0

#include "tataa/quantize.hpp"

#include <cmath>
#include <stdexcept>

namespace tataa::quantize {

namespace {

int8_t clamp127(double v) {
  if (v > 127.0) return 127;
  if (v < -127.0) return -127;
  return static_cast<int8_t>(v);
}

}  // namespace

double calibrate_scale(const std::vector<std::vector<double>>& samples) {
  if (samples.empty()) throw std::invalid_argument("calibrate_scale: no samples");
  double max_abs = 0.0;
  for (const auto& t : samples)
    for (double v : t) max_abs = std::max(max_abs, std::fabs(v));
  double s = max_abs / 127.0;
  return s > kScaleEpsilon ? s : kScaleEpsilon;
}

int8_t quantize_value(double x, double scale) {
  return clamp127(std::floor(x / scale));
}

QTensor quantize_tensor(const std::vector<double>& x, const std::vector<int64_t>& shape,
                        double scale) {
  if (!(scale > 0.0)) throw std::invalid_argument("quantize_tensor: scale must be positive");
  QTensor q;
  q.shape = shape;
  q.scale = scale;
  q.data.reserve(x.size());
  for (double v : x) q.data.push_back(quantize_value(v, scale));
  return q;
}

int8_t requantize_premul(int32_t acc, double multiplier) {
  return clamp127(std::floor(acc * multiplier));
}

int8_t requantize(int32_t acc, const QuantParams& p) {
  return requantize_premul(acc, p.sx * p.sy / p.sz);
}

Bf16 dequantize_premul(int32_t acc, double multiplier) {
  return Bf16::from_double(acc * multiplier);
}

Bf16 dequantize_to_bf16(int32_t acc, double sx, double sy) {
  return dequantize_premul(acc, sx * sy);
}

int8_t bf16_to_int8(Bf16 v, double sz) {
  if (!(sz > 0.0)) throw std::invalid_argument("bf16_to_int8: scale must be positive");
  return clamp127(std::floor(v.to_double() / sz));
}

}  // namespace tataa::quantize
