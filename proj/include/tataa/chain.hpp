// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tataa::chain {

// A vector chain is the compiler's pre-instruction form of one lowered
// non-linear / elementwise node: straight-line steps over virtual vector
// temporaries plus explicit memory traffic. The machine program is produced
// from it mechanically (register allocation + segment/config emission), and
// the golden scalar replay interprets the same steps with the scalar
// bfloat16 kernels, giving a bit-exact cross-check of the vector path.
enum class StepOp : uint8_t {
  Const,      // dst <- broadcast constant (maps to a constant register)
  Load,       // dst <- len bf16 elements at byte_addr
  LoadBcast,  // dst <- one bf16 element replicated to len lanes
  Mul,        // dst = a * b
  Add,        // dst = a + b
  Max,        // dst = max(a, b)
  Min,        // dst = min(a, b)
  Fold,       // dst[i] = a[2i] + a[2i+1], output length (len+1)/2
  AppSeed,    // dst = magic seed of a (raw fpapp)
  AppSquare,  // dst = seed(a)^2
  Exp2,       // dst = 2^floor(a)
  StoreBf16,  // mem[byte_addr ..] <- a, len elements, bit pattern
  StoreInt8,  // mem[byte_addr ..] <- quantized a with divisor scale
};

struct Step {
  StepOp op;
  int dst = -1;  // virtual register
  int a = -1;
  int b = -1;
  int len = 0;            // lanes consumed (Fold produces (len+1)/2)
  uint64_t byte_addr = 0; // Load/Store
  uint16_t const_bits = 0;
  double scale = 0.0;     // StoreInt8 divisor
  bool pin_group1 = false;  // allocator hint: long-lived input rows
};

struct Chain {
  std::string node_id;
  std::vector<Step> steps;
};

}  // namespace tataa::chain
