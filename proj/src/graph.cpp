// SPDX-License-Identifier: Apache-2.0

#include "tataa/graph.hpp"

#include <json.hpp>

#include "tataa/errors.hpp"

namespace tataa::graph {

using nlohmann::json;

const char* op_name(OpKind k) {
  switch (k) {
    case OpKind::MatMul: return "matmul";
    case OpKind::Softmax: return "softmax";
    case OpKind::LayerNorm: return "layernorm";
    case OpKind::RmsNorm: return "rmsnorm";
    case OpKind::Gelu: return "gelu";
    case OpKind::Silu: return "silu";
    case OpKind::Swiglu: return "swiglu";
    case OpKind::Relu: return "relu";
    case OpKind::Add: return "add";
    case OpKind::Transpose: return "transpose";
    case OpKind::Quantize: return "quantize";
    case OpKind::Dequantize: return "dequantize";
  }
  return "?";
}

std::optional<OpKind> op_from_name(const std::string& s) {
  for (int k = 0; k <= static_cast<int>(OpKind::Dequantize); ++k)
    if (s == op_name(static_cast<OpKind>(k))) return static_cast<OpKind>(k);
  return std::nullopt;
}

const TensorInfo& Graph::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CompileError("unknown tensor: " + name);
  return it->second;
}

TensorInfo& Graph::tensor(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw CompileError("unknown tensor: " + name);
  return it->second;
}

const Node* Graph::producer(const std::string& tensor_name) const {
  for (const auto& n : nodes)
    if (n.output == tensor_name) return &n;
  return nullptr;
}

namespace {

std::vector<Prim> expand_prims(OpKind op) {
  switch (op) {
    case OpKind::Softmax: return {Prim::Exp, Prim::RowSum, Prim::Div};
    case OpKind::LayerNorm:
      return {Prim::Square, Prim::Mean, Prim::MeanSq, Prim::Isqrt, Prim::Shift, Prim::Scale};
    case OpKind::RmsNorm: return {Prim::Square, Prim::MeanSq, Prim::Isqrt, Prim::Scale};
    case OpKind::Gelu: return {Prim::MulElem, Prim::AddElem, Prim::Tanh, Prim::Scale, Prim::Clamp};
    case OpKind::Silu: return {Prim::Exp, Prim::Div, Prim::MulElem};
    case OpKind::Swiglu: return {Prim::Sigmoid, Prim::MulElem, Prim::Sigmoid, Prim::MulElem};
    case OpKind::Relu: return {Prim::Clamp};
    default: return {};
  }
}

int64_t numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// Declared-or-inferred output handling: creates the tensor when absent,
// checks the shape when present.
void bind_output(Graph& g, const Node& n, const std::vector<int64_t>& shape, Format fmt) {
  auto it = g.tensors.find(n.output);
  if (it == g.tensors.end()) {
    TensorInfo t;
    t.name = n.output;
    t.shape = shape;
    t.format = fmt;
    g.tensors.emplace(n.output, std::move(t));
    return;
  }
  if (it->second.shape != shape)
    throw CompileError("node " + n.id + ": output shape mismatch for " + n.output);
  it->second.format = fmt;
}

void infer_node(Graph& g, Node& n) {
  auto in = [&](size_t k) -> const TensorInfo& {
    if (k >= n.inputs.size()) throw CompileError("node " + n.id + ": missing input operand");
    return g.tensor(n.inputs[k]);
  };
  switch (n.op) {
    case OpKind::MatMul: {
      const auto& a = in(0);
      const auto& b = in(1);
      if (a.shape.size() != 2 || b.shape.size() != 2 || a.shape[1] != b.shape[0])
        throw CompileError("node " + n.id + ": matmul shape mismatch");
      bind_output(g, n, {a.shape[0], b.shape[1]},
                  g.tensors.count(n.output) ? g.tensor(n.output).format : Format::Bf16);
      break;
    }
    case OpKind::Add: {
      const auto& a = in(0);
      const auto& b = in(1);
      if (a.shape != b.shape) throw CompileError("node " + n.id + ": add shape mismatch");
      bind_output(g, n, a.shape, Format::Bf16);
      break;
    }
    case OpKind::Transpose: {
      const auto& a = in(0);
      if (a.shape.size() != 2) throw CompileError("node " + n.id + ": transpose needs a matrix");
      bind_output(g, n, {a.shape[1], a.shape[0]}, a.format);
      break;
    }
    case OpKind::Quantize: {
      bind_output(g, n, in(0).shape, Format::Int8);
      break;
    }
    case OpKind::Dequantize: {
      bind_output(g, n, in(0).shape, Format::Bf16);
      break;
    }
    case OpKind::Swiglu: {
      // The inner W x + b product arrives as the second input, produced by a
      // separate int8 matmul node.
      const auto& a = in(0);
      if (in(1).shape != a.shape)
        throw CompileError("node " + n.id + ": swiglu inputs must agree in shape");
      bind_output(g, n, a.shape, Format::Bf16);
      n.prims = expand_prims(n.op);
      break;
    }
    default: {  // elementwise / row-wise non-linear
      bind_output(g, n, in(0).shape, Format::Bf16);
      n.prims = expand_prims(n.op);
      break;
    }
  }
  if ((n.op == OpKind::LayerNorm || n.op == OpKind::RmsNorm) && !n.gamma.empty()) {
    const auto& gam = g.tensor(n.gamma);
    if (numel(gam.shape) != in(0).shape.back())
      throw CompileError("node " + n.id + ": gamma length mismatch");
  }
}

}  // namespace

Graph parse_and_infer(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph: ") + e.what());
  }
  Graph g;
  try {
    for (const auto& jt : j.at("tensors")) {
      TensorInfo t;
      t.name = jt.at("name").get<std::string>();
      for (const auto& d : jt.at("shape")) t.shape.push_back(d.get<int64_t>());
      std::string fmt = jt.value("format", "bf16");
      if (fmt != "bf16" && fmt != "int8") throw ParseError("tensor " + t.name + ": unknown format " + fmt);
      t.format = fmt == "int8" ? Format::Int8 : Format::Bf16;
      std::string kind = jt.value("kind", "intermediate");
      t.is_input = kind == "input";
      t.is_weight = kind == "weight";
      t.is_output = kind == "output";
      if (jt.contains("data"))
        for (const auto& v : jt.at("data")) t.data.push_back(v.get<double>());
      if ((t.is_input || t.is_weight) && static_cast<int64_t>(t.data.size()) != numel(t.shape))
        throw ParseError("tensor " + t.name + ": data length does not match shape");
      t.scale = jt.value("scale", 0.0);
      if (!g.tensors.emplace(t.name, t).second) throw ParseError("duplicate tensor " + t.name);
    }
    for (const auto& jn : j.at("nodes")) {
      Node n;
      n.id = jn.at("id").get<std::string>();
      std::string opn = jn.at("op").get<std::string>();
      auto op = op_from_name(opn);
      if (!op) throw CompileError("node " + n.id + ": unknown op '" + opn + "'");
      n.op = *op;
      for (const auto& s : jn.at("inputs")) n.inputs.push_back(s.get<std::string>());
      n.output = jn.at("output").get<std::string>();
      if (jn.contains("attrs")) {
        const auto& a = jn.at("attrs");
        n.eps = a.value("eps", 1e-5);
        n.gamma = a.value("gamma", "");
        n.beta = a.value("beta", "");
        n.inner_w = a.value("inner_w", "");
        n.inner_b = a.value("inner_b", "");
        n.out_scale_mul = a.value("out_scale_mul", 1.0);
      }
      g.nodes.push_back(std::move(n));
    }
    if (j.contains("quant"))
      for (auto it = j.at("quant").begin(); it != j.at("quant").end(); ++it)
        g.tensor(it.key()).scale = it.value().get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph: ") + e.what());
  }

  // Inputs must exist before use; nodes are given in execution order.
  std::map<std::string, bool> defined;
  for (auto& [name, t] : g.tensors)
    if (t.is_input || t.is_weight) defined[name] = true;
  for (auto& n : g.nodes) {
    for (const auto& i : n.inputs)
      if (!defined.count(i) && !g.tensors.count(i))
        throw CompileError("node " + n.id + ": undefined input " + i);
    infer_node(g, n);
    defined[n.output] = true;
  }
  return g;
}

std::string to_json(const Graph& g) {
  nlohmann::ordered_json j;
  j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, t] : g.tensors) {
    nlohmann::ordered_json jt;
    jt["name"] = name;
    jt["shape"] = t.shape;
    jt["format"] = t.format == Format::Int8 ? "int8" : "bf16";
    jt["kind"] = t.is_input ? "input" : t.is_weight ? "weight" : t.is_output ? "output" : "intermediate";
    if (!t.data.empty()) jt["data"] = t.data;
    if (t.scale != 0.0) jt["scale"] = t.scale;
    j["tensors"].push_back(jt);
  }
  j["nodes"] = nlohmann::ordered_json::array();
  for (const auto& n : g.nodes) {
    nlohmann::ordered_json jn;
    jn["id"] = n.id;
    jn["op"] = op_name(n.op);
    jn["inputs"] = n.inputs;
    jn["output"] = n.output;
    nlohmann::ordered_json a;
    if (n.op == OpKind::LayerNorm || n.op == OpKind::RmsNorm) {
      a["eps"] = n.eps;
      if (!n.gamma.empty()) a["gamma"] = n.gamma;
      if (!n.beta.empty()) a["beta"] = n.beta;
    }
    if (n.op == OpKind::Swiglu) {
      a["inner_w"] = n.inner_w;
      a["inner_b"] = n.inner_b;
    }
    if (n.out_scale_mul != 1.0) a["out_scale_mul"] = n.out_scale_mul;
    if (!a.empty()) jn["attrs"] = a;
    j["nodes"].push_back(jn);
  }
  return j.dump(2);
}

Graph fuse(const Graph& g) {
  Graph out = g;
  std::map<std::string, int> consumers;
  for (const auto& n : out.nodes)
    for (const auto& i : n.inputs) consumers[i] += 1;
  std::vector<Node> kept;
  // Index of the surviving producer per tensor name.
  std::map<std::string, size_t> prod;
  for (const auto& n : out.nodes) {
    if (n.op == OpKind::Quantize || n.op == OpKind::Dequantize || n.op == OpKind::Transpose) {
      auto it = prod.find(n.inputs.at(0));
      if (it == prod.end())
        throw CompileError("node " + n.id + ": conversion has no producing node to fuse into");
      // A producer feeding other consumers besides this conversion keeps its
      // output; the conversion then runs as an explicit pass through the
      // quantization unit (load + converting store).
      if (consumers.at(n.inputs[0]) > 1) {
        if (n.op != OpKind::Quantize)
          throw CompileError("node " + n.id +
                             ": only quantize conversions can stay standalone on shared outputs");
        kept.push_back(n);
        prod[n.output] = kept.size() - 1;
        continue;
      }
      Node& p = kept[it->second];
      if (n.op == OpKind::Transpose) {
        if (p.op != OpKind::MatMul)
          throw CompileError("node " + n.id + ": transpose fuses only into matmul stores");
        p.store_transpose = true;
      }
      // The conversion's output becomes the producer's output; its format
      // and scale ride on the tensor itself.
      prod.erase(p.output);
      p.output = n.output;
      prod[p.output] = static_cast<size_t>(it->second);
      continue;
    }
    kept.push_back(n);
    prod[n.output] = kept.size() - 1;
  }
  out.nodes = std::move(kept);

  // Post-fusion consistency: matmul consumes int8 operands, vector nodes
  // consume bfloat16.
  for (const auto& n : out.nodes) {
    if (n.op == OpKind::MatMul) {
      for (const auto& i : n.inputs)
        if (out.tensor(i).format != Format::Int8)
          throw CompileError("node " + n.id + ": matmul operand " + i + " is not int8");
    } else {
      for (const auto& i : n.inputs)
        if (out.tensor(i).format != Format::Bf16)
          throw CompileError("node " + n.id + ": vector operand " + i + " is not bfloat16");
    }
  }
  return out;
}

}  // namespace tataa::graph
