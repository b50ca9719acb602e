// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tataa/bfarith.hpp"
#include "tataa/chain.hpp"
#include "tataa/graph.hpp"

namespace tataa::refmodel {

// 64-bit real reference tensors; oracle error is negligible against
// bfloat16 tolerances.
struct RefTensor {
  std::vector<double> data;
  std::vector<int64_t> shape;

  int64_t rows() const {
    int64_t r = 1;
    for (size_t k = 0; k + 1 < shape.size(); ++k) r *= shape[k];
    return r;
  }
  int64_t cols() const { return shape.empty() ? 1 : shape.back(); }
};

struct ErrorReport {
  double rmse = 0.0;
  double max_abs = 0.0;
  double cosine = 1.0;
  std::map<int, int64_t> ulp_hist;  // bf16 comparisons only
};

ErrorReport compare(const std::vector<double>& a, const std::vector<double>& b);
ErrorReport compare_bits(const std::vector<uint16_t>& a, const std::vector<uint16_t>& b);

// Cross-platform deterministic generator (splitmix64 + Box-Muller).
struct Rng {
  uint64_t state;
  explicit Rng(uint64_t seed) : state(seed) {}
  uint64_t next();
  double uniform();               // [0, 1)
  double uniform(double lo, double hi);
  double normal();
};

// ---- reference operators -------------------------------------------------

RefTensor matmul(const RefTensor& a, const RefTensor& b);
RefTensor transpose(const RefTensor& a);
RefTensor add(const RefTensor& a, const RefTensor& b);      // shapes equal or b 1-D row bias
RefTensor softmax_rows(const RefTensor& a);
RefTensor layernorm(const RefTensor& x, const RefTensor& gamma, const RefTensor& beta, double eps);
RefTensor rmsnorm(const RefTensor& x, const RefTensor& gamma, double eps);
RefTensor gelu(const RefTensor& x);   // exact erf form
RefTensor silu(const RefTensor& x);
RefTensor swiglu(const RefTensor& x, const RefTensor& wxb);
RefTensor relu(const RefTensor& x);

// ---- desk-scale transformer block -----------------------------------------

enum class BlockVariant { EncoderGeluLayerNorm, DecoderSiluRmsNorm, SwigluRmsNorm };

struct BlockSpec {
  int seq = 16;
  int hidden = 64;
  int heads = 2;
  int mlp = 256;
  BlockVariant variant = BlockVariant::EncoderGeluLayerNorm;
  double eps = 1e-5;
  int head_dim() const { return hidden / heads; }
};

using TensorMap = std::map<std::string, RefTensor>;

// Random weights for the block, deterministic in the seed. Names match the
// graph builder's tensor names.
TensorMap make_block_weights(const BlockSpec& spec, uint64_t seed);
RefTensor make_block_input(const BlockSpec& spec, uint64_t seed);

// Full-precision forward pass; returns every named intermediate ("tape").
// For tensors that are int8 on the machine, the tape holds the
// pre-quantization real values. tape["y"] is the block output.
TensorMap ref_block(const BlockSpec& spec, const TensorMap& weights, const RefTensor& x);

// Max-abs calibration over n_samples random inputs: scale per int8-role
// tensor name.
std::map<std::string, double> calibrate_block(const BlockSpec& spec, const TensorMap& weights,
                                              uint64_t seed, int n_samples);

// Builds the mixed-precision graph for the block (explicit quantize /
// dequantize / transpose nodes; fuse() folds them into store paths).
graph::Graph build_block_graph(const BlockSpec& spec, const TensorMap& weights,
                               const RefTensor& x, const std::map<std::string, double>& scales);

// ---- golden scalar replay of compiled vector chains -----------------------

// Applies the chain's steps to `mem` using the scalar bfloat16 kernels,
// lane by lane. Bit-exact target for the simulator's vector execution.
void golden_replay(const chain::Chain& ch, int lanes, std::vector<uint8_t>& mem,
                   const bfarith::ArithConfig& arith);

}  // namespace tataa::refmodel
