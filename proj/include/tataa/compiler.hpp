// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "tataa/chain.hpp"
#include "tataa/graph.hpp"
#include "tataa/machine.hpp"

namespace tataa::compiler {

struct TensorPlacement {
  std::string name;
  int64_t byte_offset = 0;
  std::vector<int64_t> shape;    // logical
  std::vector<int64_t> padded;   // storage shape (2-D tensors padded to tile multiples)
  graph::Format format = graph::Format::Bf16;
  double scale = 0.0;
  int64_t bytes = 0;
};

struct Manifest {
  std::map<std::string, TensorPlacement> tensors;
  int64_t scratch_base = 0;
  int64_t total_bytes = 0;
  std::string config_fingerprint;
  std::vector<std::string> program_files;  // filled when written to disk
};

struct Stats {
  int64_t matmul_tiles = 0;
  int64_t instructions = 0;
  int64_t chains = 0;
};

struct LoweredProgram {
  std::vector<std::vector<uint64_t>> per_core;
  Manifest manifest;
  std::vector<uint8_t> memory_image;
  std::vector<chain::Chain> chains;  // batch item 0, node order (oracle targets)
  Stats stats;
};

struct CompileOptions {
  int batch = 1;
  bool double_buffer = true;
  // Software-pipelining depth for elementwise tiles and row-wise chains.
  int interleave = 2;
};

// Full lowering: fuse, place tensors, quantize weights into the image,
// schedule matmuls, lower vector chains, emit per-core binaries.
LoweredProgram compile(const graph::Graph& g, const machine::MachineConfig& cfg,
                       const CompileOptions& opt = {});

// Static program checks (every register written before read, loads precede
// consumers, HALT last). Throws CompileError. Called by compile(); exposed
// for tests.
void validate_program(const std::vector<uint64_t>& words);

std::string config_fingerprint(const machine::MachineConfig& cfg);

// Manifest (de)serialization, JSON.
std::string manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const std::string& text);

// Reads a tensor back from a memory image per its placement (logical
// elements, padding stripped). int8 tensors are returned dequantized when
// `dequantize` is set.
std::vector<double> read_tensor(const std::vector<uint8_t>& memory, const TensorPlacement& p,
                                bool dequantize = true);
std::vector<uint16_t> read_tensor_bits(const std::vector<uint8_t>& memory, const TensorPlacement& p);

}  // namespace tataa::compiler
