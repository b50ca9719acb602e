// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "graph_helpers.hpp"
#include "oracles.hpp"
#include "tataa/compiler.hpp"
#include "tataa/errors.hpp"
#include "tataa/isa.hpp"
#include "tataa/quantize.hpp"

using namespace tataa;
using namespace gh;
using compiler::CompileOptions;
using graph::Prim;

namespace {

std::vector<double> randu(std::mt19937& rng, size_t n, double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Counts instructions by opcode in a program.
std::map<isa::Opcode, int> histogram(const std::vector<uint64_t>& words) {
  std::map<isa::Opcode, int> h;
  for (auto w : words) h[isa::decode(w).opcode] += 1;
  return h;
}

// Simple int8 matmul graph with explicit conversion nodes.
Graph matmul_graph(int m, int k, int n, const std::vector<double>& a, const std::vector<double>& b,
                   double sa, double sb, double sz, bool int8_out, bool transpose_out = false) {
  Graph g;
  add_tensor(g, "a", {m, k}, Format::Int8, "input", a, sa);
  add_tensor(g, "b", {k, n}, Format::Int8, "weight", b, sb);
  add_tensor(g, "acc", {m, n}, Format::Bf16, "intermediate");
  add_node(g, "mm", OpKind::MatMul, {"a", "b"}, "acc");
  if (int8_out) {
    add_tensor(g, "z", {m, n}, Format::Int8, transpose_out ? "intermediate" : "output", {}, sz);
    add_node(g, "q", OpKind::Quantize, {"acc"}, "z");
  } else {
    add_tensor(g, "z", {m, n}, Format::Bf16, transpose_out ? "intermediate" : "output");
    add_node(g, "q", OpKind::Dequantize, {"acc"}, "z");
  }
  if (transpose_out) {
    add_tensor(g, "zt", {n, m}, int8_out ? Format::Int8 : Format::Bf16, "output", {}, sz);
    add_node(g, "t", OpKind::Transpose, {"z"}, "zt");
  }
  return g;
}

}  // namespace

TEST_CASE("parse_and_infer: shapes, prims, errors") {
  std::string text = R"({
    "tensors": [
      {"name":"a","shape":[8,16],"format":"int8","kind":"input","scale":0.05,
       "data":[)" + [] {
        std::string s;
        for (int i = 0; i < 128; ++i) s += (i ? "," : "") + std::to_string((i % 7) * 0.1);
        return s;
      }() + R"(]},
      {"name":"b","shape":[16,8],"format":"int8","kind":"weight","scale":0.05,
       "data":[)" + [] {
        std::string s;
        for (int i = 0; i < 128; ++i) s += (i ? "," : "") + std::to_string((i % 5) * 0.1);
        return s;
      }() + R"(]}
    ],
    "nodes": [
      {"id":"mm","op":"matmul","inputs":["a","b"],"output":"z"}
    ]
  })";
  auto g = graph::parse_and_infer(text);
  CHECK(g.tensor("z").shape == std::vector<int64_t>{8, 8});

  // Non-linear expansion recipes.
  Graph sg = vec_graph(OpKind::Softmax, 2, 16, std::vector<double>(32, 0.5));
  CHECK(sg.nodes[0].prims.empty());  // direct construction has no recipe
  std::string soft = R"({
    "tensors": [{"name":"x","shape":[2,16],"kind":"input","data":[)" + [] {
        std::string s;
        for (int i = 0; i < 32; ++i) s += (i ? "," : "") + std::to_string(i * 0.01);
        return s;
      }() + R"(]}],
    "nodes": [
      {"id":"s","op":"softmax","inputs":["x"],"output":"p"},
      {"id":"l","op":"layernorm","inputs":["p"],"output":"q"}
    ]
  })";
  auto g2 = graph::parse_and_infer(soft);
  const auto& sp = g2.nodes[0].prims;
  CHECK(sp.size() >= 3);
  CHECK(std::count(sp.begin(), sp.end(), Prim::Exp) == 1);
  CHECK(std::count(sp.begin(), sp.end(), Prim::RowSum) == 1);
  CHECK(std::count(sp.begin(), sp.end(), Prim::Div) == 1);
  const auto& lp = g2.nodes[1].prims;
  CHECK(std::count(lp.begin(), lp.end(), Prim::Mean) == 1);
  CHECK(std::count(lp.begin(), lp.end(), Prim::MeanSq) == 1);

  CHECK_THROWS_AS(graph::parse_and_infer("{not json"), ParseError);
  std::string bad_op = R"({"tensors":[{"name":"x","shape":[2],"kind":"input","data":[1,2]}],
    "nodes":[{"id":"n","op":"frobnicate","inputs":["x"],"output":"y"}]})";
  CHECK_THROWS_AS(graph::parse_and_infer(bad_op), CompileError);
  std::string bad_shape = R"({"tensors":[
      {"name":"a","shape":[2,3],"kind":"input","data":[1,2,3,4,5,6]},
      {"name":"b","shape":[2,3],"kind":"weight","data":[1,2,3,4,5,6]}],
    "nodes":[{"id":"n","op":"matmul","inputs":["a","b"],"output":"y"}]})";
  CHECK_THROWS_AS(graph::parse_and_infer(bad_shape), CompileError);
}

TEST_CASE("fuse absorbs conversions into store paths") {
  std::mt19937 rng(3);
  auto a = randu(rng, 32 * 32);
  auto b = randu(rng, 32 * 32);

  // matmul -> quantize: single matmul, int8 store.
  auto g1 = graph::fuse(matmul_graph(32, 32, 32, a, b, 0.02, 0.02, 0.1, true));
  REQUIRE(g1.nodes.size() == 1);
  CHECK(g1.nodes[0].op == OpKind::MatMul);
  CHECK(g1.nodes[0].output == "z");
  CHECK(g1.tensor("z").format == Format::Int8);

  // matmul -> quantize -> transpose: transpose flag set.
  auto g2 = graph::fuse(matmul_graph(32, 32, 32, a, b, 0.02, 0.02, 0.1, true, true));
  REQUIRE(g2.nodes.size() == 1);
  CHECK(g2.nodes[0].store_transpose);
  CHECK(g2.nodes[0].output == "zt");

  // matmul -> dequantize -> softmax: bf16 store feeding a vector node.
  Graph g3 = matmul_graph(32, 32, 32, a, b, 0.02, 0.02, 0.1, false);
  g3.tensor("z").is_output = false;
  add_tensor(g3, "p", {32, 32}, Format::Bf16, "output");
  add_node(g3, "sm", OpKind::Softmax, {"z"}, "p");
  auto f3 = graph::fuse(g3);
  REQUIRE(f3.nodes.size() == 2);
  CHECK(f3.nodes[0].op == OpKind::MatMul);
  CHECK(f3.tensor("z").format == Format::Bf16);
  CHECK(f3.nodes[1].op == OpKind::Softmax);

  // Conversion with no producer cannot fuse.
  Graph g4;
  add_tensor(g4, "x", {4, 4}, Format::Bf16, "input", std::vector<double>(16, 1.0));
  add_tensor(g4, "xq", {4, 4}, Format::Int8, "output", {}, 0.1);
  add_node(g4, "q", OpKind::Quantize, {"x"}, "xq");
  CHECK_THROWS_AS(graph::fuse(g4), CompileError);
}

TEST_CASE("matmul scheduling: tile counts and bank alternation") {
  std::mt19937 rng(5);
  auto cfg = small_config();

  auto count_for = [&](int m, int k, int n) {
    auto a = randu(rng, static_cast<size_t>(m * k));
    auto b = randu(rng, static_cast<size_t>(k * n));
    auto g = matmul_graph(m, k, n, a, b, 0.02, 0.02, 0.5, true);
    auto lp = compiler::compile(g, cfg);
    return histogram(lp.per_core[0]);
  };

  auto h1 = count_for(32, 64, 32);  // exactly one tile
  CHECK(h1[isa::Opcode::LoadM] == 2);
  CHECK(h1[isa::Opcode::MatMul] == 1);
  CHECK(h1[isa::Opcode::StoreM] == 1);

  auto h4 = count_for(64, 64, 64);  // four output tiles
  CHECK(h4[isa::Opcode::LoadM] == 8);
  CHECK(h4[isa::Opcode::MatMul] == 4);
  CHECK(h4[isa::Opcode::StoreM] == 4);

  // Banks alternate RMX0/RMX1 across tiles.
  auto a = randu(rng, 64 * 64);
  auto b = randu(rng, 64 * 64);
  auto lp = compiler::compile(matmul_graph(64, 64, 64, a, b, 0.02, 0.02, 0.5, true), cfg);
  std::vector<uint8_t> mm_banks;
  for (auto w : lp.per_core[0]) {
    auto i = isa::decode(w);
    if (i.opcode == isa::Opcode::MatMul) mm_banks.push_back(i.srcA);
  }
  REQUIRE(mm_banks.size() == 4);
  CHECK(mm_banks[0] != mm_banks[1]);
  CHECK(mm_banks[1] != mm_banks[2]);

  // Zero-sized matmul lowers to nothing but HALT.
  Graph ge;
  add_tensor(ge, "a", {0, 32}, Format::Int8, "input", {}, 0.1);
  add_tensor(ge, "b", {32, 32}, Format::Int8, "weight", randu(rng, 32 * 32), 0.1);
  add_tensor(ge, "acc", {0, 32}, Format::Bf16, "intermediate");
  add_tensor(ge, "z", {0, 32}, Format::Int8, "output", {}, 0.5);
  add_node(ge, "mm", OpKind::MatMul, {"a", "b"}, "acc");
  add_node(ge, "q", OpKind::Quantize, {"acc"}, "z");
  auto lpe = compiler::compile(ge, cfg);
  CHECK(lpe.per_core[0].size() == 1);  // HALT only
}

TEST_CASE("compiled matmul matches the quantization-pipeline oracle exactly") {
  std::mt19937 rng(7);
  auto cfg = small_config();
  cfg.acc_bits = 32;
  for (int trial = 0; trial < 6; ++trial) {
    int m = 1 + static_cast<int>(rng() % 70);
    int k = 1 + static_cast<int>(rng() % 90);
    int n = 1 + static_cast<int>(rng() % 70);
    auto a = randu(rng, static_cast<size_t>(m * k));
    auto b = randu(rng, static_cast<size_t>(k * n));
    double sa = 0.017, sb = 0.021, sz = 0.3;
    auto g = matmul_graph(m, k, n, a, b, sa, sb, sz, true);
    auto rr = compile_and_run(g, cfg);

    // Oracle: quantize inputs (weights round to nearest offline), integer
    // matmul, requantize.
    std::vector<int8_t> qa(static_cast<size_t>(m * k)), qb(static_cast<size_t>(k * n));
    for (size_t i = 0; i < qa.size(); ++i) qa[i] = quantize::quantize_value(a[i], sa);
    for (size_t i = 0; i < qb.size(); ++i)
      qb[i] = static_cast<int8_t>(std::floor(b[i] / sb + 0.5));
    auto acc = oracle::matmul_i8(qa, qb, m, k, n, 32);
    const auto& pz = rr.lp.manifest.tensors.at("z");
    auto got = compiler::read_tensor(rr.memory, pz, /*dequantize=*/false);
    double mul = sa * sb / sz;
    for (size_t i = 0; i < acc.size(); ++i)
      CHECK(static_cast<int>(got[i]) == quantize::requantize_premul(acc[i], mul));
  }
}

TEST_CASE("transposed store writes the transposed tile grid") {
  std::mt19937 rng(9);
  auto cfg = small_config();
  cfg.acc_bits = 32;
  int m = 48, k = 40, n = 56;
  auto a = randu(rng, static_cast<size_t>(m * k));
  auto b = randu(rng, static_cast<size_t>(k * n));
  auto g = matmul_graph(m, k, n, a, b, 0.02, 0.02, 0.4, true, /*transpose=*/true);
  auto rr = compile_and_run(g, cfg);

  std::vector<int8_t> qa(static_cast<size_t>(m * k)), qb(static_cast<size_t>(k * n));
  for (size_t i = 0; i < qa.size(); ++i) qa[i] = quantize::quantize_value(a[i], 0.02);
  for (size_t i = 0; i < qb.size(); ++i) qb[i] = static_cast<int8_t>(std::floor(b[i] / 0.02 + 0.5));
  auto acc = oracle::matmul_i8(qa, qb, m, k, n, 32);
  const auto& pz = rr.lp.manifest.tensors.at("zt");
  REQUIRE(pz.shape == std::vector<int64_t>{n, m});
  auto got = compiler::read_tensor(rr.memory, pz, false);
  double mul = 0.02 * 0.02 / 0.4;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      CHECK(static_cast<int>(got[static_cast<size_t>(j) * static_cast<size_t>(m) + static_cast<size_t>(i)]) ==
            quantize::requantize_premul(acc[static_cast<size_t>(i) * static_cast<size_t>(n) + static_cast<size_t>(j)], mul));
}

TEST_CASE("double buffering beats the serialized schedule") {
  std::mt19937 rng(11);
  auto cfg = small_config();
  int m = 128, k = 128, n = 128;  // 16 output tiles
  auto a = randu(rng, static_cast<size_t>(m * k));
  auto b = randu(rng, static_cast<size_t>(k * n));
  auto g = matmul_graph(m, k, n, a, b, 0.02, 0.02, 0.5, true);

  CompileOptions dbuf, serial;
  serial.double_buffer = false;
  auto r1 = compile_and_run(g, cfg, dbuf);
  auto r2 = compile_and_run(g, cfg, serial);
  CHECK(r1.lp.stats.matmul_tiles == 16);
  CHECK(r1.report.total_cycles * 4 <= r2.report.total_cycles * 3);  // <= 0.75x
  // Same bytes regardless of schedule.
  CHECK(r1.memory == r2.memory);
}

TEST_CASE("compiled vector chains replay bit-exactly (golden oracle)") {
  std::mt19937 rng(13);
  auto cfg = small_config();
  for (OpKind op : {OpKind::Gelu, OpKind::Silu, OpKind::Relu, OpKind::Softmax,
                    OpKind::LayerNorm, OpKind::RmsNorm}) {
    for (int trial = 0; trial < 3; ++trial) {
      int rows = op == OpKind::Softmax ? 3 : 1;
      int d = 32 + static_cast<int>(rng() % 993);
      auto data = randu(rng, static_cast<size_t>(rows) * static_cast<size_t>(d), -3.0, 3.0);
      Graph g = vec_graph(op, rows, d, data);
      if (op == OpKind::LayerNorm || op == OpKind::RmsNorm) {
        add_tensor(g, "gam", {d}, Format::Bf16, "weight", randu(rng, static_cast<size_t>(d), 0.5, 1.5));
        g.nodes[0].gamma = "gam";
        if (op == OpKind::LayerNorm) {
          add_tensor(g, "bet", {d}, Format::Bf16, "weight", randu(rng, static_cast<size_t>(d), -0.5, 0.5));
          g.nodes[0].beta = "bet";
        }
      }
      auto rr = compile_and_run(g, cfg);
      auto replay = replay_chains(rr, g, cfg);
      const auto& py = rr.lp.manifest.tensors.at("y");
      auto got = compiler::read_tensor_bits(rr.memory, py);
      auto want = compiler::read_tensor_bits(replay, py);
      REQUIRE(got.size() == want.size());
      bool equal = got == want;
      CHECK(equal);
    }
  }
}

TEST_CASE("elementwise activations write back in place") {
  std::mt19937 rng(17);
  // Two-node graph: the gelu input is a node output with a single consumer,
  // so the result reuses the input's address.
  Graph g;
  int d = 256;
  add_tensor(g, "x", {1, d}, Format::Bf16, "input", randu(rng, static_cast<size_t>(d)));
  add_tensor(g, "s", {1, d}, Format::Bf16, "intermediate");
  add_tensor(g, "y", {1, d}, Format::Bf16, "output");
  add_node(g, "pre", OpKind::Add, {"x", "x"}, "s");
  add_node(g, "act", OpKind::Gelu, {"s"}, "y");
  auto cfg = small_config();
  auto rr = compile_and_run(g, cfg);
  // In-place write-back: no fresh region for y.
  CHECK(rr.lp.manifest.tensors.at("y").byte_offset == rr.lp.manifest.tensors.at("s").byte_offset);
  auto replay = replay_chains(rr, g, cfg);
  CHECK(compiler::read_tensor_bits(rr.memory, rr.lp.manifest.tensors.at("y")) ==
        compiler::read_tensor_bits(replay, rr.lp.manifest.tensors.at("y")));
}

TEST_CASE("batch partitioning across cores") {
  std::mt19937 rng(19);
  auto cfg = small_config();
  auto a = randu(rng, 32 * 32);
  auto b = randu(rng, 32 * 32);
  auto g = matmul_graph(32, 32, 32, a, b, 0.02, 0.02, 0.5, true);

  CompileOptions o16;
  o16.batch = 16;
  auto lp16 = compiler::compile(g, cfg, o16);
  REQUIRE(lp16.per_core.size() == 8);
  auto h0 = histogram(lp16.per_core[0]);
  CHECK(h0[isa::Opcode::MatMul] == 2);  // two items per core

  CompileOptions o1;
  o1.batch = 1;
  auto lp1 = compiler::compile(g, cfg, o1);
  CHECK(histogram(lp1.per_core[0])[isa::Opcode::MatMul] == 1);
  for (int c = 1; c < 8; ++c) CHECK(lp1.per_core[static_cast<size_t>(c)].size() == 1);  // HALT only

  // Per-core programs identical modulo addresses / segment payloads.
  // Segment CONFIGs are pure base-address artifacts (their count depends on
  // where tensors land), so normalization drops them and zeroes addresses.
  auto normalize = [](const std::vector<uint64_t>& words) {
    std::vector<uint64_t> out;
    for (auto w : words) {
      auto i = isa::decode(w);
      if (i.opcode == isa::Opcode::Config) {
        auto id = static_cast<isa::ConfigId>(i.dst);
        if (id == isa::ConfigId::SegLoad || id == isa::ConfigId::SegStore) continue;
      }
      i.addr = 0;
      out.push_back(isa::encode(i));
    }
    return out;
  };
  CHECK(normalize(lp16.per_core[0]) == normalize(lp16.per_core[3]));

  // Batched results equal the single-item result, item by item.
  std::vector<uint8_t> mem16 = lp16.memory_image;
  machine::run(lp16.per_core, mem16, cfg);
  auto z0 = compiler::read_tensor(mem16, lp16.manifest.tensors.at("z"), false);
  auto z7 = compiler::read_tensor(mem16, lp16.manifest.tensors.at("z#7"), false);
  CHECK(z0 == z7);
}

TEST_CASE("program validation catches broken streams") {
  using isa::Instruction;
  Instruction mm;
  mm.opcode = isa::Opcode::MatMul;
  mm.dst = isa::kRegDmb;
  mm.srcA = isa::kRegRmx0;
  mm.srcB = isa::kRegRmy0;
  mm.len = 8;
  std::vector<uint64_t> bad = {isa::encode(mm), isa::encode(Instruction{})};
  CHECK_THROWS_AS(compiler::validate_program(bad), CompileError);
  std::vector<uint64_t> no_halt = {isa::encode(Instruction::config(1, 0))};
  CHECK_THROWS_AS(compiler::validate_program(no_halt), CompileError);
}

TEST_CASE("compilation is deterministic") {
  std::mt19937 rng(23);
  auto cfg = small_config();
  auto data = randu(rng, 2 * 300);
  Graph g = vec_graph(OpKind::Softmax, 2, 300, data);
  auto l1 = compiler::compile(g, cfg);
  auto l2 = compiler::compile(g, cfg);
  CHECK(l1.per_core == l2.per_core);
  CHECK(l1.memory_image == l2.memory_image);
  CHECK(compiler::manifest_to_json(l1.manifest) == compiler::manifest_to_json(l2.manifest));
}

TEST_CASE("manifest round trip") {
  std::mt19937 rng(29);
  auto cfg = small_config();
  auto g = vec_graph(OpKind::Relu, 1, 64, randu(rng, 64));
  auto lp = compiler::compile(g, cfg);
  auto text = compiler::manifest_to_json(lp.manifest);
  auto m2 = compiler::manifest_from_json(text);
  CHECK(compiler::manifest_to_json(m2) == text);
}

TEST_CASE("normalization loads its input rows from memory exactly once") {
  std::mt19937 rng(31);
  auto cfg = small_config();
  for (int d : {64, 256, 1024}) {
    Graph g = vec_graph(OpKind::LayerNorm, 1, d, randu(rng, static_cast<size_t>(d)));
    auto lp = compiler::compile(g, cfg);
    const auto& px = lp.manifest.tensors.at("x");
    // Count LOAD.V instructions whose effective address lies in x's region.
    int64_t seg = 0, loads_of_x = 0;
    for (auto w : lp.per_core[0]) {
      auto i = isa::decode(w);
      if (i.opcode == isa::Opcode::Config &&
          i.dst == static_cast<uint8_t>(isa::ConfigId::SegLoad))
        seg = i.config_payload();
      if (i.opcode == isa::Opcode::LoadV) {
        int64_t byte = ((seg << 12) | i.addr) * 2;
        if (byte >= px.byte_offset && byte < px.byte_offset + px.bytes) ++loads_of_x;
      }
    }
    CHECK(loads_of_x == (d + cfg.lanes() - 1) / cfg.lanes());
  }
}

TEST_CASE("elementwise tiles iterate load-compute-store with no spill traffic") {
  std::mt19937 rng(37);
  auto cfg = small_config();
  Graph g = vec_graph(OpKind::Gelu, 1, 1024, randu(rng, 1024));
  auto lp = compiler::compile(g, cfg);
  int loads = 0, stores = 0, other_mem = 0;
  for (auto w : lp.per_core[0]) {
    auto i = isa::decode(w);
    if (i.opcode == isa::Opcode::LoadV) ++loads;
    else if (i.opcode == isa::Opcode::StoreV) ++stores;
    else if (i.opcode == isa::Opcode::LoadM || i.opcode == isa::Opcode::StoreM) ++other_mem;
  }
  // 1024 elements = 8 iterations of 128-lane tiles; one load and one store
  // each, nothing in between touches memory.
  CHECK(loads == 8);
  CHECK(stores == 8);
  CHECK(other_mem == 0);
}
