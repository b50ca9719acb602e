// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace tataa::graph {

enum class OpKind {
  MatMul,
  Softmax,
  LayerNorm,
  RmsNorm,
  Gelu,
  Silu,
  Swiglu,
  Relu,
  Add,
  Transpose,
  Quantize,
  Dequantize,
};

const char* op_name(OpKind k);
std::optional<OpKind> op_from_name(const std::string& s);

enum class Format : uint8_t { Int8, Bf16 };

// Primitive sub-operations a non-linear node expands into at parse time;
// the lowering follows this recipe.
enum class Prim : uint8_t {
  Exp, RowSum, Div, Square, Mean, MeanSq, Isqrt, Scale, Shift, Tanh, Sigmoid, MulElem, AddElem, Clamp,
};

struct TensorInfo {
  std::string name;
  std::vector<int64_t> shape;   // logical shape, row-major
  Format format = Format::Bf16;
  bool is_input = false;        // provided in the initial memory image
  bool is_weight = false;
  bool is_output = false;
  std::vector<double> data;     // inputs/weights only
  double scale = 0.0;           // int8 tensors: static symmetric scale
};

struct Node {
  std::string id;
  OpKind op = OpKind::Add;
  std::vector<std::string> inputs;
  std::string output;
  // attrs
  double eps = 1e-5;                 // norms
  std::string gamma, beta;           // norm weight tensor names ("" if none)
  std::string inner_w, inner_b;      // swiglu inner matmul parameters
  double out_scale_mul = 1.0;        // folded output multiplier (e.g. 1/sqrt(d_head))
  // store-path attributes filled by fusion
  bool store_transpose = false;
  std::vector<Prim> prims;           // parse-time expansion of non-linear ops
};

struct Graph {
  std::map<std::string, TensorInfo> tensors;
  std::vector<Node> nodes;  // topological order

  const TensorInfo& tensor(const std::string& name) const;
  TensorInfo& tensor(const std::string& name);
  const Node* producer(const std::string& tensor_name) const;
};

// Parses the JSON graph file format (sections: tensors, nodes, quant),
// validates shapes and references, infers output shapes, expands non-linear
// nodes into their primitive recipes. Throws ParseError / CompileError.
Graph parse_and_infer(const std::string& json_text);
std::string to_json(const Graph& g);

// Absorbs quantize/dequantize/transpose nodes into the producing node's
// store path; afterwards no standalone conversion nodes remain.
Graph fuse(const Graph& g);

}  // namespace tataa::graph
