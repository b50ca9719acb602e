// SPDX-License-Identifier: Apache-2.0
//
// Graph -> TATAA instruction stream lowering: tensor placement and weight
// quantization, tiled matmul scheduling with double-buffer reordering,
// non-linear decomposition into vector chains, AMA-style reductions,
// software pipelining of independent tiles, register allocation, and
// address/segment assignment.

#include "tataa/compiler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <json.hpp>
#include <set>

#include "tataa/bfarith.hpp"
#include "tataa/errors.hpp"
#include "tataa/quantize.hpp"

namespace tataa::compiler {

using chain::Chain;
using chain::Step;
using chain::StepOp;
using graph::Format;
using graph::Graph;
using graph::Node;
using graph::OpKind;
using isa::ConfigId;
using isa::Instruction;
using isa::Opcode;

namespace {

int64_t pad_to(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

uint64_t f64_bits(double v) {
  uint64_t u;
  std::memcpy(&u, &v, 8);
  return u;
}

// ----------------------------------------------------------------------
// Instruction emission with config-register tracking.

struct Emitter {
  const machine::MachineConfig* cfg;
  std::vector<Instruction> out;

  int64_t seg_load = -1, seg_store = -1;
  int64_t stride_x = -1, stride_y = -1, stride_store = -1;
  uint64_t requant = ~0ull, dequant = ~0ull, qdiv = ~0ull;
  std::map<uint16_t, int> const_slots;

  explicit Emitter(const machine::MachineConfig& c) : cfg(&c) {}

  void config(ConfigId id, uint32_t payload) {
    out.push_back(Instruction::config(static_cast<uint8_t>(id), payload));
  }
  void config_f64(ConfigId lo, double v, uint64_t& mirror) {
    uint64_t u = f64_bits(v);
    if (mirror == u) return;
    mirror = u;
    config(lo, static_cast<uint32_t>(u & 0xFFFFFFFFull));
    config(static_cast<ConfigId>(static_cast<uint8_t>(lo) + 1), static_cast<uint32_t>(u >> 32));
  }
  void set_requant(double v) { config_f64(ConfigId::RequantMulLo, v, requant); }
  void set_dequant(double v) { config_f64(ConfigId::DequantMulLo, v, dequant); }
  void set_qdiv(double v) { config_f64(ConfigId::QuantDivLo, v, qdiv); }
  void set_stride_x(int64_t words) {
    if (stride_x != words) config(ConfigId::StrideX, static_cast<uint32_t>(stride_x = words));
  }
  void set_stride_y(int64_t words) {
    if (stride_y != words) config(ConfigId::StrideY, static_cast<uint32_t>(stride_y = words));
  }
  void set_stride_store(int64_t words) {
    if (stride_store != words) config(ConfigId::StrideStore, static_cast<uint32_t>(stride_store = words));
  }

  void seg_for_load(int64_t word_addr) {
    int64_t seg = word_addr >> 12;
    if (seg_load != seg) config(ConfigId::SegLoad, static_cast<uint32_t>(seg_load = seg));
  }
  void seg_for_store(int64_t word_addr) {
    int64_t seg = word_addr >> 12;
    if (seg_store != seg) config(ConfigId::SegStore, static_cast<uint32_t>(seg_store = seg));
  }

  static int64_t to_words(int64_t bytes) {
    if (bytes & 1) throw CompileError("unaligned address: " + std::to_string(bytes));
    return bytes / 2;
  }

  void load_m(uint8_t bank, int64_t byte_addr, int len) {
    int64_t w = to_words(byte_addr);
    seg_for_load(w);
    Instruction i;
    i.opcode = Opcode::LoadM;
    i.dst = bank;
    i.addr = static_cast<uint16_t>(w & 0xFFF);
    i.len = static_cast<uint16_t>(len);
    out.push_back(i);
  }
  void load_v(uint8_t reg, int64_t byte_addr, int len, uint8_t flags = 0) {
    int64_t w = to_words(byte_addr);
    seg_for_load(w);
    Instruction i;
    i.opcode = Opcode::LoadV;
    i.dst = reg;
    i.addr = static_cast<uint16_t>(w & 0xFFF);
    i.len = static_cast<uint16_t>(len);
    i.flags = flags;
    out.push_back(i);
  }
  void matmul(uint8_t bx, uint8_t by, int len) {
    Instruction i;
    i.opcode = Opcode::MatMul;
    i.dst = isa::kRegDmb;
    i.srcA = bx;
    i.srcB = by;
    i.len = static_cast<uint16_t>(len);
    out.push_back(i);
  }
  void store_m(int64_t byte_addr, int rows, uint8_t flags) {
    int64_t w = to_words(byte_addr);
    seg_for_store(w);
    Instruction i;
    i.opcode = Opcode::StoreM;
    i.srcA = isa::kRegDmb;
    i.addr = static_cast<uint16_t>(w & 0xFFF);
    i.len = static_cast<uint16_t>(rows);
    i.flags = flags;
    out.push_back(i);
  }
  void store_v(uint8_t reg, int64_t byte_addr, int len, uint8_t flags) {
    int64_t w = to_words(byte_addr);
    seg_for_store(w);
    Instruction i;
    i.opcode = Opcode::StoreV;
    i.srcA = reg;
    i.addr = static_cast<uint16_t>(w & 0xFFF);
    i.len = static_cast<uint16_t>(len);
    i.flags = flags;
    out.push_back(i);
  }
  void vec(Opcode op, uint8_t dst, uint8_t a, uint8_t b, int len, uint8_t flags = 0) {
    Instruction i;
    i.opcode = op;
    i.dst = dst;
    i.srcA = a;
    i.srcB = b;
    i.len = static_cast<uint16_t>(len);
    i.flags = flags;
    out.push_back(i);
  }
  void halt() { out.push_back(Instruction{}); }

  // Constant registers are reassigned per chain.
  void reset_consts() { const_slots.clear(); }
  uint8_t const_reg(uint16_t bits) {
    auto it = const_slots.find(bits);
    if (it == const_slots.end()) {
      if (const_slots.size() >= isa::kConstRegs)
        throw CompileError("constant register pressure");
      int slot = static_cast<int>(const_slots.size());
      const_slots.emplace(bits, slot);
      config(static_cast<ConfigId>(static_cast<uint8_t>(ConfigId::ConstBase) + slot), bits);
      return static_cast<uint8_t>(isa::kRegConstBase + slot);
    }
    return static_cast<uint8_t>(isa::kRegConstBase + it->second);
  }
};

// ----------------------------------------------------------------------
// Vector chain construction.

struct ChainBuilder {
  Chain ch;
  int next_vreg = 0;
  const bfarith::ArithConfig& arith;

  explicit ChainBuilder(std::string node_id, const bfarith::ArithConfig& a) : arith(a) {
    ch.node_id = std::move(node_id);
  }

  int fresh() { return next_vreg++; }
  int push(Step s) {
    if (s.dst < 0 && (s.op != StepOp::StoreBf16 && s.op != StepOp::StoreInt8)) s.dst = fresh();
    ch.steps.push_back(s);
    return s.dst;
  }
  int cst(double v, int len) {
    Step s{StepOp::Const};
    s.const_bits = Bf16::from_double(v).bits;
    s.len = len;
    return push(s);
  }
  int cst_bits(uint16_t bits, int len) {
    Step s{StepOp::Const};
    s.const_bits = bits;
    s.len = len;
    return push(s);
  }
  int load(int64_t byte, int len, bool pin = false) {
    Step s{StepOp::Load};
    s.byte_addr = static_cast<uint64_t>(byte);
    s.len = len;
    s.pin_group1 = pin;
    return push(s);
  }
  int bcast(int64_t byte, int len) {
    Step s{StepOp::LoadBcast};
    s.byte_addr = static_cast<uint64_t>(byte);
    s.len = len;
    return push(s);
  }
  int bin(StepOp op, int a, int b, int len) {
    Step s{op};
    s.a = a;
    s.b = b;
    s.len = len;
    return push(s);
  }
  int mul(int a, int b, int len) { return bin(StepOp::Mul, a, b, len); }
  int add(int a, int b, int len) { return bin(StepOp::Add, a, b, len); }
  int vmax(int a, int b, int len) { return bin(StepOp::Max, a, b, len); }
  int vmin(int a, int b, int len) { return bin(StepOp::Min, a, b, len); }
  int fold(int a, int len) {
    Step s{StepOp::Fold};
    s.a = a;
    s.len = len;
    return push(s);
  }
  int unop(StepOp op, int a, int len) {
    Step s{op};
    s.a = a;
    s.len = len;
    return push(s);
  }
  void store16(int a, int64_t byte, int len) {
    Step s{StepOp::StoreBf16};
    s.a = a;
    s.byte_addr = static_cast<uint64_t>(byte);
    s.len = len;
    push(s);
  }
  void store8(int a, int64_t byte, int len, double scale) {
    Step s{StepOp::StoreInt8};
    s.a = a;
    s.byte_addr = static_cast<uint64_t>(byte);
    s.len = len;
    s.scale = scale;
    push(s);
  }

  // Inverse square root of d: seed + squared seed, then the Newton steps
  // 1.5 t - 0.5 d t^3, matching the scalar composition bit for bit.
  int isqrt(int d, int len) {
    int t = unop(StepOp::AppSeed, d, len);
    int tsq = unop(StepOp::AppSquare, d, len);
    int half = mul(d, cst(-0.5, len), len);
    for (int it = 0; it < arith.newton_iters; ++it) {
      int cube = mul(t, tsq, len);
      int corr = mul(half, cube, len);
      t = add(mul(t, cst(1.5, len), len), corr, len);
      if (it + 1 < arith.newton_iters) tsq = mul(t, t, len);
    }
    return t;
  }
  // 1/d for positive d.
  int recip(int d, int len) {
    int r = isqrt(d, len);
    return mul(r, r, len);
  }
  // sigmoid(v) = 1 / (1 + 2^floor(-v/ln2))
  int sigmoid(int v, int len) {
    int e = unop(StepOp::Exp2, mul(v, cst_bits(bfarith::kBitsMinusInvLn2, len), len), len);
    int den = add(e, cst(1.0, len), len);
    return recip(den, len);
  }
  int pade_tanh(int u, int len) {
    int c27 = cst(27.0, len);
    int u2 = mul(u, u, len);
    int u3 = mul(u2, u, len);
    int num = add(mul(c27, u, len), u3, len);
    int den = add(c27, mul(cst(9.0, len), u2, len), len);
    int q = recip_mul(num, den, len);
    q = vmax(q, cst(-1.0, len), len);
    return vmin(q, cst(1.0, len), len);
  }
  // num / den for positive den: num * r * r with r = isqrt(den).
  int recip_mul(int num, int den, int len) {
    int r = isqrt(den, len);
    return mul(mul(num, r, len), r, len);
  }
};

// ----------------------------------------------------------------------
// Chain -> instructions: linear-scan register allocation over the two
// register groups, crosswise VX/VY ordering inside each group.

struct RegAlloc {
  std::deque<uint8_t> group1, group2;
  std::map<int, uint8_t> phys;

  RegAlloc() {
    int half = isa::kVectorRegsPerSide / 2;
    for (int k = 0; k < half; ++k) {
      group1.push_back(static_cast<uint8_t>(isa::kRegVxBase + k));
      group1.push_back(static_cast<uint8_t>(isa::kRegVyBase + k));
      group2.push_back(static_cast<uint8_t>(isa::kRegVxBase + half + k));
      group2.push_back(static_cast<uint8_t>(isa::kRegVyBase + half + k));
    }
  }
  uint8_t alloc(int vreg, bool pin_group1) {
    std::deque<uint8_t>* pools[2] = {pin_group1 ? &group1 : &group2,
                                     pin_group1 ? &group2 : &group1};
    for (auto* pool : pools) {
      if (!pool->empty()) {
        uint8_t r = pool->front();
        pool->pop_front();
        phys[vreg] = r;
        return r;
      }
    }
    throw CompileError("vector register pressure");
  }
  void free(uint8_t r) {
    int half = isa::kVectorRegsPerSide / 2;
    int idx = (r & 0x0F);
    (idx < half ? group1 : group2).push_back(r);
  }
};

void lower_chain(Emitter& em, const Chain& ch) {
  em.reset_consts();
  std::map<int, int> last_use;
  for (size_t k = 0; k < ch.steps.size(); ++k) {
    const Step& s = ch.steps[k];
    if (s.a >= 0) last_use[s.a] = static_cast<int>(k);
    if (s.b >= 0) last_use[s.b] = static_cast<int>(k);
  }
  RegAlloc ra;
  std::map<int, uint8_t> const_of;  // vreg -> constant register
  auto operand = [&](int v) -> uint8_t {
    auto itc = const_of.find(v);
    if (itc != const_of.end()) return itc->second;
    auto it = ra.phys.find(v);
    if (it == ra.phys.end()) throw CompileError("chain uses undefined register");
    return it->second;
  };
  auto release = [&](int v, size_t k) {
    if (v < 0 || const_of.count(v)) return;
    auto it = last_use.find(v);
    // A vreg nobody reads is released right after its defining step.
    if (it != last_use.end() && it->second != static_cast<int>(k)) return;
    auto pit = ra.phys.find(v);
    if (pit == ra.phys.end()) return;  // same vreg appears twice in one step
    ra.free(pit->second);
    ra.phys.erase(pit);
  };

  for (size_t k = 0; k < ch.steps.size(); ++k) {
    const Step& s = ch.steps[k];
    switch (s.op) {
      case StepOp::Const:
        const_of[s.dst] = em.const_reg(s.const_bits);
        break;
      case StepOp::Load:
        em.load_v(ra.alloc(s.dst, s.pin_group1), static_cast<int64_t>(s.byte_addr), s.len);
        release(s.dst, k);  // dead loads do not hold a slot
        break;
      case StepOp::LoadBcast:
        em.load_v(ra.alloc(s.dst, s.pin_group1), static_cast<int64_t>(s.byte_addr), s.len,
                  isa::kFlagBroadcast);
        break;
      case StepOp::Mul:
      case StepOp::Add:
      case StepOp::Max:
      case StepOp::Min: {
        uint8_t a = operand(s.a), b = operand(s.b);
        release(s.a, k);
        release(s.b, k);
        uint8_t d = ra.alloc(s.dst, s.pin_group1);
        uint8_t flags = 0;
        Opcode op = Opcode::MulV;
        if (s.op != StepOp::Mul) {
          op = Opcode::AddV;
          if (s.op == StepOp::Max) flags |= static_cast<uint8_t>(1 << isa::kQuantModeShift);
          if (s.op == StepOp::Min) flags |= static_cast<uint8_t>(2 << isa::kQuantModeShift);
        }
        em.vec(op, d, a, b, s.len, flags);
        release(s.dst, k);
        break;
      }
      case StepOp::Fold: {
        uint8_t a = operand(s.a);
        release(s.a, k);
        uint8_t d = ra.alloc(s.dst, s.pin_group1);
        em.vec(Opcode::AddV, d, a, 0, s.len, isa::kFlagFold);
        release(s.dst, k);
        break;
      }
      case StepOp::AppSeed:
      case StepOp::AppSquare:
      case StepOp::Exp2: {
        uint8_t a = operand(s.a);
        release(s.a, k);
        uint8_t d = ra.alloc(s.dst, s.pin_group1);
        uint8_t flags = s.op == StepOp::AppSeed ? isa::kFlagRawApp
                        : s.op == StepOp::Exp2  ? isa::kFlagExp2
                                                : 0;
        em.vec(Opcode::AppV, d, a, 0, s.len, flags);
        release(s.dst, k);
        break;
      }
      case StepOp::StoreBf16: {
        uint8_t a = operand(s.a);
        release(s.a, k);
        em.store_v(a, static_cast<int64_t>(s.byte_addr), s.len,
                   static_cast<uint8_t>(static_cast<uint8_t>(isa::QuantMode::Bf16ToBf16)
                                        << isa::kQuantModeShift));
        break;
      }
      case StepOp::StoreInt8: {
        uint8_t a = operand(s.a);
        em.set_qdiv(s.scale);
        release(s.a, k);
        em.store_v(a, static_cast<int64_t>(s.byte_addr), s.len,
                   static_cast<uint8_t>(static_cast<uint8_t>(isa::QuantMode::Bf16ToInt8)
                                        << isa::kQuantModeShift));
        break;
      }
    }
  }
}

// Round-robin interleave of independent step groups (software pipelining of
// tile/row chains; values are unaffected, RAW stalls shrink).
std::vector<Step> zip_groups(std::vector<std::vector<Step>> groups) {
  std::vector<Step> out;
  size_t total = 0;
  for (auto& g : groups) total += g.size();
  out.reserve(total);
  std::vector<size_t> pos(groups.size(), 0);
  bool more = true;
  while (more) {
    more = false;
    for (size_t g = 0; g < groups.size(); ++g) {
      if (pos[g] < groups[g].size()) {
        out.push_back(groups[g][pos[g]++]);
        more = true;
      }
    }
  }
  return out;
}

// Zips independent step blocks in groups of `width` and hoists each group's
// leading Load steps in front of the previous group's compute.
std::vector<Step> pipeline_groups(std::vector<std::vector<Step>> blocks, int width) {
  std::vector<std::vector<Step>> staged;  // [group] -> zipped compute-with-loads-split
  std::vector<std::vector<Step>> loads;
  for (size_t g0 = 0; g0 < blocks.size(); g0 += static_cast<size_t>(width)) {
    std::vector<std::vector<Step>> group;
    std::vector<Step> group_loads;
    for (size_t k = g0; k < std::min(blocks.size(), g0 + static_cast<size_t>(width)); ++k) {
      std::vector<Step> rest;
      for (auto& st : blocks[k]) {
        // Leading loads only: a load after compute (e.g. gamma rows) stays.
        if ((st.op == StepOp::Load || st.op == StepOp::LoadBcast) && rest.empty())
          group_loads.push_back(st);
        else
          rest.push_back(st);
      }
      group.push_back(std::move(rest));
    }
    loads.push_back(std::move(group_loads));
    staged.push_back(zip_groups(std::move(group)));
  }
  std::vector<Step> out;
  for (size_t g = 0; g < staged.size(); ++g) {
    if (g == 0) out.insert(out.end(), loads[0].begin(), loads[0].end());
    if (g + 1 < staged.size()) out.insert(out.end(), loads[g + 1].begin(), loads[g + 1].end());
    out.insert(out.end(), staged[g].begin(), staged[g].end());
  }
  return out;
}

// ----------------------------------------------------------------------

struct Compiler {
  const Graph& g;
  const machine::MachineConfig& cfg;
  CompileOptions opt;
  Manifest manifest;
  std::vector<uint8_t> image;
  std::vector<Chain> chains;
  Stats stats;
  int64_t cursor = 0;
  int64_t scratch_cursor = 0;
  std::map<std::string, int> consumer_count;

  Compiler(const Graph& gr, const machine::MachineConfig& c, const CompileOptions& o)
      : g(gr), cfg(c), opt(o) {}

  int tile_r() const { return cfg.tile_rows(); }
  int tile_c() const { return cfg.tile_cols(); }

  // ---- placement -------------------------------------------------------

  static std::pair<int64_t, int64_t> dims2(const std::vector<int64_t>& shape) {
    if (shape.empty()) return {1, 1};
    int64_t cols = shape.back();
    int64_t rows = 1;
    for (size_t k = 0; k + 1 < shape.size(); ++k) rows *= shape[k];
    return {rows, cols};
  }

  TensorPlacement make_placement(const graph::TensorInfo& t, const std::string& name) {
    TensorPlacement p;
    p.name = name;
    p.shape = t.shape;
    p.format = t.format;
    p.scale = t.scale;
    auto [rows, cols] = dims2(t.shape);
    int64_t pr = t.shape.size() >= 2 ? pad_to(rows, tile_r()) : rows;
    int64_t pc = t.shape.size() >= 2 ? pad_to(cols, tile_c()) : cols;
    p.padded = {pr, pc};
    int64_t elem = t.format == Format::Int8 ? 1 : 2;
    p.bytes = pr * pc * elem;
    p.byte_offset = cursor;
    cursor += pad_to(p.bytes, 64);
    return p;
  }

  const TensorPlacement& place_of(const std::string& tensor, int item) const {
    std::string key = tensor;
    if (item > 0 && !g.tensor(tensor).is_weight) key += "#" + std::to_string(item);
    auto it = manifest.tensors.find(key);
    if (it == manifest.tensors.end()) throw CompileError("unplaced tensor " + key);
    return it->second;
  }

  void write_tensor_data(const TensorPlacement& p, const graph::TensorInfo& t) {
    if (t.data.empty()) return;
    auto [rows, cols] = dims2(t.shape);
    int64_t pc = p.padded[1];
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t c = 0; c < cols; ++c) {
        double v = t.data[static_cast<size_t>(r * cols + c)];
        if (t.format == Format::Int8) {
          // Offline weight quantization rounds to nearest: the runtime floor
          // semantics would put a -S/2 bias on every weight, which couples
          // with positive-mean activations and grows with the inner
          // dimension. Runtime (on-chip) quantization keeps floor.
          double q = t.is_weight ? std::floor(v / p.scale + 0.5)
                                 : std::floor(v / p.scale);
          q = std::min(127.0, std::max(-127.0, q));
          image[static_cast<size_t>(p.byte_offset + r * pc + c)] =
              static_cast<uint8_t>(static_cast<int8_t>(q));
        } else {
          uint16_t bits = Bf16::from_double(v).bits;
          size_t b = static_cast<size_t>(p.byte_offset + (r * pc + c) * 2);
          image[b] = static_cast<uint8_t>(bits & 0xFF);
          image[b + 1] = static_cast<uint8_t>(bits >> 8);
        }
      }
  }

  // In-place write-back targets: output tensor name -> the input whose
  // storage it reuses (resolved transitively at placement).
  std::map<std::string, std::string> alias;

  void place_all() {
    // Weights first (shared across batch items), then per-item activations.
    for (const auto& [name, t] : g.tensors) {
      if (!t.is_weight) continue;
      graph::TensorInfo ti = t;
      if (ti.format == Format::Int8 && ti.scale <= 0.0)
        ti.scale = quantize::calibrate_scale({ti.data});
      manifest.tensors.emplace(name, make_placement(ti, name));
    }
    for (int item = 0; item < opt.batch; ++item) {
      for (const auto& [name, t] : g.tensors) {
        if (t.is_weight) continue;
        if (t.format == Format::Int8 && t.scale <= 0.0)
          throw CompileError("tensor " + name + ": int8 tensor has no calibrated scale");
        if (alias.count(name)) continue;  // placed with its target below
        std::string key = item > 0 ? name + "#" + std::to_string(item) : name;
        manifest.tensors.emplace(key, make_placement(t, key));
      }
      for (const auto& [name, target0] : alias) {
        std::string target = target0;
        while (alias.count(target)) target = alias.at(target);
        std::string tkey = item > 0 ? target + "#" + std::to_string(item) : target;
        std::string key = item > 0 ? name + "#" + std::to_string(item) : name;
        TensorPlacement p = manifest.tensors.at(tkey);
        p.name = key;
        p.shape = g.tensor(name).shape;
        manifest.tensors.emplace(key, std::move(p));
      }
    }
    manifest.scratch_base = cursor;
    int64_t scratch_bytes = 64 * 1024;
    manifest.total_bytes = cursor + scratch_bytes;
    if (manifest.total_bytes > cfg.mem_bytes)
      throw CompileError("memory image exceeds configured external memory");
    image.assign(static_cast<size_t>(manifest.total_bytes), 0);
    for (const auto& [key, p] : manifest.tensors) {
      std::string base_name = key.substr(0, key.find('#'));
      write_tensor_data(p, g.tensor(base_name));
    }
  }

  // In-place write-back for single-consumer elementwise activations.
  bool aliases_input(const Node& n) const {
    if (n.op != OpKind::Gelu && n.op != OpKind::Silu && n.op != OpKind::Relu) return false;
    const auto& in = g.tensor(n.inputs[0]);
    const auto& out = g.tensor(n.output);
    if (in.is_input) return false;  // graph inputs stay intact
    if (in.format != out.format || in.shape != out.shape) return false;
    return consumer_count.at(n.inputs[0]) == 1;
  }

  int64_t scratch_alloc(int64_t bytes) {
    int64_t at = manifest.scratch_base + scratch_cursor;
    scratch_cursor += pad_to(bytes, 64);
    if (scratch_cursor > 64 * 1024) throw CompileError("scratch region exhausted");
    return at;
  }

  // ---- matmul scheduling -------------------------------------------------

  void emit_matmul(Emitter& em, const Node& n, int item) {
    const auto& A = place_of(n.inputs[0], item);
    const auto& B = place_of(n.inputs[1], item);
    const auto& O = place_of(n.output, item);
    int64_t m = A.shape[0], kk = A.shape[1], nn = B.shape[1];
    if (m == 0 || kk == 0 || nn == 0) return;
    int64_t kp = A.padded[1];
    if (kp != B.padded[0]) throw CompileError("node " + n.id + ": padded inner extents disagree");
    if (kp > cfg.d_mat) throw CompileError("node " + n.id + ": tile inner extent exceeds D_mat");

    double sx = A.scale, sy = B.scale;
    bool out_int8 = O.format == Format::Int8;
    if (out_int8) {
      if (O.scale <= 0) throw CompileError("node " + n.id + ": output scale missing");
      em.set_requant(sx * sy * n.out_scale_mul / O.scale);
    } else {
      em.set_dequant(sx * sy * n.out_scale_mul);
    }
    em.set_stride_x(A.padded[1] / 2);
    em.set_stride_y(B.padded[1] / 2);
    int64_t out_elem = out_int8 ? 1 : 2;
    int64_t out_stride_words = O.padded[1] * out_elem / 2;
    em.set_stride_store(out_stride_words);

    int64_t ti = A.padded[0] / tile_r();
    int64_t tj = B.padded[1] / tile_c();
    int64_t tiles = ti * tj;
    stats.matmul_tiles += tiles;
    auto bank_x = [&](int64_t t) {
      return opt.double_buffer && (t % 2) ? isa::kRegRmx1 : isa::kRegRmx0;
    };
    auto bank_y = [&](int64_t t) {
      return opt.double_buffer && (t % 2) ? isa::kRegRmy1 : isa::kRegRmy0;
    };
    auto load_tile = [&](int64_t t) {
      int64_t i = t / tj, j = t % tj;
      em.load_m(bank_x(t), A.byte_offset + i * tile_r() * A.padded[1], static_cast<int>(kp));
      em.load_m(bank_y(t), B.byte_offset + j * tile_c(), static_cast<int>(kp));
    };
    auto store_tile = [&](int64_t t) {
      int64_t i = t / tj, j = t % tj;
      uint8_t flags = static_cast<uint8_t>(
          (out_int8 ? static_cast<uint8_t>(isa::QuantMode::Int8ToInt8)
                    : static_cast<uint8_t>(isa::QuantMode::Int8ToBf16))
          << isa::kQuantModeShift);
      int64_t base;
      if (n.store_transpose) {
        flags |= isa::kFlagTranspose;
        base = O.byte_offset + (j * tile_c() * O.padded[1] + i * tile_r()) * out_elem;
      } else {
        base = O.byte_offset + (i * tile_r() * O.padded[1] + j * tile_c()) * out_elem;
      }
      em.store_m(base, tile_r(), flags);
    };

    load_tile(0);
    for (int64_t t = 0; t < tiles; ++t) {
      if (opt.double_buffer && t + 1 < tiles) load_tile(t + 1);
      em.matmul(bank_x(t), bank_y(t), static_cast<int>(kp));
      store_tile(t);
      if (!opt.double_buffer && t + 1 < tiles) load_tile(t + 1);
    }
  }

  // ---- vector chains -----------------------------------------------------

  struct RowView {
    int64_t base = 0;   // byte address of row 0
    int64_t stride = 0; // bytes between rows
    int64_t rows = 0;
    int64_t cols = 0;   // logical row length
  };

  RowView row_view(const TensorPlacement& p) const {
    auto [rows, cols] = dims2(p.shape);
    int64_t elem = p.format == Format::Int8 ? 1 : 2;
    return {p.byte_offset, p.padded[1] * elem, rows, cols};
  }

  struct OutSink {
    bool int8 = false;
    double scale = 0.0;
  };

  OutSink sink_for(const TensorPlacement& out, const std::string& node_id) const {
    OutSink s;
    s.int8 = out.format == Format::Int8;
    if (s.int8) {
      if (out.scale <= 0) throw CompileError("node " + node_id + ": output scale missing");
      s.scale = out.scale;
    }
    return s;
  }

  void emit_store(ChainBuilder& b, int v, int64_t byte, int len, const OutSink& s) {
    if (s.int8) {
      // The quantization unit floors; pre-biasing by half a step makes the
      // effective quantizer round-to-nearest and halves the error energy.
      int adj = b.add(v, b.cst(s.scale / 2.0, len), len);
      b.store8(adj, byte, len, s.scale);
    } else {
      b.store16(v, byte, len);
    }
  }

  // Sum of one logical row that spans several registers: crosswise pairwise
  // adds down to one register, then lane folds down to a scalar in lane 0.
  int reduce_row(ChainBuilder& b, std::vector<int> regs, int fold_len) {
    int lanes = cfg.lanes();
    while (regs.size() > 1) {
      std::vector<int> next;
      for (size_t k = 0; k + 1 < regs.size(); k += 2)
        next.push_back(b.add(regs[k], regs[k + 1], lanes));
      if (regs.size() % 2) next.push_back(regs.back());
      regs = std::move(next);
    }
    int cur = regs[0];
    int len = fold_len;
    while (len > 1) {
      cur = b.fold(cur, len);
      len = (len + 1) / 2;
    }
    return cur;
  }

  // Elementwise chains iterate uniform lane-wide tiles. Consecutive tiles
  // are software-pipelined: tiles are zipped in groups to hide the 4-stage
  // RAW latency, and each group's loads are hoisted one group ahead so the
  // memory latency overlaps the previous group's compute.
  template <class TileFn>
  Chain tiled_chain(const Node& n, int64_t rows, int64_t cols, TileFn&& tile_fn) {
    ChainBuilder b(n.id, cfg.arith);
    int lanes = cfg.lanes();
    std::vector<std::vector<Step>> tiles;
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t c0 = 0; c0 < cols; c0 += lanes) {
        int len = static_cast<int>(std::min<int64_t>(lanes, cols - c0));
        size_t mark = b.ch.steps.size();
        tile_fn(b, r, c0, len);
        tiles.emplace_back(b.ch.steps.begin() + static_cast<long>(mark), b.ch.steps.end());
        b.ch.steps.resize(mark);
      }
    }
    auto piped = pipeline_groups(std::move(tiles), std::max(1, opt.interleave));
    b.ch.steps.insert(b.ch.steps.end(), piped.begin(), piped.end());
    return std::move(b.ch);
  }

  Chain chain_elementwise(const Node& n, int item) {
    const auto& in = place_of(n.inputs[0], item);
    const auto& out = place_of(n.output, item);
    auto iv = row_view(in);
    auto ov = row_view(out);
    auto sink = sink_for(out, n.id);
    const TensorPlacement* in2 = n.inputs.size() > 1 ? &place_of(n.inputs[1], item) : nullptr;
    bool bias_row = in2 && in2->shape.size() == 1;

    return tiled_chain(n, iv.rows, iv.cols, [&](ChainBuilder& b, int64_t r, int64_t c0, int len) {
      int x = b.load(iv.base + r * iv.stride + c0 * 2, len);
      int y = -1;
      switch (n.op) {
        case OpKind::Relu:
          y = b.vmax(x, b.cst(0.0, len), len);
          break;
        case OpKind::Gelu: {
          int x2 = b.mul(x, x, len);
          int x3 = b.mul(x2, x, len);
          int u = b.mul(b.add(x, b.mul(x3, b.cst(0.044715, len), len), len),
                        b.cst(0.7978845608028654, len), len);
          int t = b.pade_tanh(u, len);
          int half_x = b.mul(x, b.cst(0.5, len), len);
          y = b.add(half_x, b.mul(half_x, t, len), len);
          break;
        }
        case OpKind::Silu:
          y = b.recip_mul(x, b.add(b.unop(StepOp::Exp2,
                                          b.mul(x, b.cst_bits(bfarith::kBitsMinusInvLn2, len), len), len),
                                   b.cst(1.0, len), len),
                          len);
          break;
        case OpKind::Swiglu: {
          const auto& wv = *in2;
          auto w_view = row_view(wv);
          int w = b.load(w_view.base + r * w_view.stride + c0 * 2, len);
          int sx = b.recip_mul(x, b.add(b.unop(StepOp::Exp2,
                                               b.mul(x, b.cst_bits(bfarith::kBitsMinusInvLn2, len), len), len),
                                        b.cst(1.0, len), len),
                               len);  // x * sigma(x)
          int sw = b.sigmoid(w, len);
          y = b.mul(sx, b.mul(x, sw, len), len);
          break;
        }
        case OpKind::Add: {
          int bsrc;
          if (bias_row) {
            bsrc = b.load(in2->byte_offset + c0 * 2, len);
          } else {
            auto v2 = row_view(*in2);
            bsrc = b.load(v2.base + r * v2.stride + c0 * 2, len);
          }
          y = b.add(x, bsrc, len);
          break;
        }
        case OpKind::Quantize:
          y = x;  // conversion happens on the store path
          break;
        default:
          throw CompileError("node " + n.id + ": not an elementwise op");
      }
      emit_store(b, y, ov.base + r * ov.stride + c0 * (sink.int8 ? 1 : 2), len, sink);
    });
  }

  Chain chain_softmax(const Node& n, int item) {
    const auto& in = place_of(n.inputs[0], item);
    const auto& out = place_of(n.output, item);
    auto iv = row_view(in);
    auto ov = row_view(out);
    auto sink = sink_for(out, n.id);
    int lanes = cfg.lanes();
    int64_t scratch = scratch_alloc(2 * iv.rows);

    // Rows are independent; pipelining them overlaps the scalar
    // denominator's memory round trip with neighbouring rows' compute.
    int regs_per_row = static_cast<int>((iv.cols + lanes - 1) / lanes);
    int group = std::max<int64_t>(1, std::min<int64_t>(opt.interleave * 2l,
                                                       12 / (regs_per_row + 2)));

    ChainBuilder b(n.id, cfg.arith);
    std::vector<std::vector<Step>> row_blocks;
    for (int64_t r = 0; r < iv.rows; ++r) {
      size_t mark = b.ch.steps.size();
      std::vector<int> evec;
      int last_len = 0;
      int inv_ln2 = b.cst_bits(bfarith::kBitsInvLn2, lanes);
      for (int64_t c0 = 0; c0 < iv.cols; c0 += lanes) {
        int len = static_cast<int>(std::min<int64_t>(lanes, iv.cols - c0));
        int x = b.load(iv.base + r * iv.stride + c0 * 2, len);
        evec.push_back(b.unop(StepOp::Exp2, b.mul(x, inv_ln2, len), len));
        last_len = len;
      }
      int total = reduce_row(b, evec, evec.size() == 1 ? last_len : lanes);
      // Scalar round trip through memory to broadcast the denominator.
      int64_t slot = scratch + 2 * r;
      b.store16(total, slot, 1);
      int denb = b.bcast(slot, lanes);
      int rec = b.recip(denb, lanes);
      for (int64_t c0 = 0; c0 < iv.cols; c0 += lanes) {
        int len = static_cast<int>(std::min<int64_t>(lanes, iv.cols - c0));
        int e = evec[static_cast<size_t>(c0 / lanes)];
        int y = b.mul(e, rec, len);
        emit_store(b, y, ov.base + r * ov.stride + c0 * (sink.int8 ? 1 : 2), len, sink);
      }
      row_blocks.emplace_back(b.ch.steps.begin() + static_cast<long>(mark), b.ch.steps.end());
      b.ch.steps.resize(mark);
    }
    auto piped = pipeline_groups(std::move(row_blocks), group);
    b.ch.steps.insert(b.ch.steps.end(), piped.begin(), piped.end());
    return std::move(b.ch);
  }

  // Rows reduced by summing full registers; zero-padded lanes are inert, so
  // register adds always run the full lane width.
  Chain chain_norm(const Node& n, int item) {
    const auto& in = place_of(n.inputs[0], item);
    const auto& out = place_of(n.output, item);
    bool is_ln = n.op == OpKind::LayerNorm;
    auto iv = row_view(in);
    auto ov = row_view(out);
    auto sink = sink_for(out, n.id);
    int lanes = cfg.lanes();
    int64_t d = iv.cols;
    const TensorPlacement* gp = n.gamma.empty() ? nullptr : &place_of(n.gamma, item);
    const TensorPlacement* bp = n.beta.empty() ? nullptr : &place_of(n.beta, item);
    int64_t scratch = scratch_alloc(4 * iv.rows);

    ChainBuilder b(n.id, cfg.arith);
    for (int64_t r = 0; r < iv.rows; ++r) {
      // AMA: x loaded once into group-1; squares into group-2; the two
      // reduction trees interleave as registers free up.
      std::vector<int> xr, x2r;
      int last_len = 0;
      for (int64_t c0 = 0; c0 < d; c0 += lanes) {
        int len = static_cast<int>(std::min<int64_t>(lanes, d - c0));
        xr.push_back(b.load(iv.base + r * iv.stride + c0 * 2, len, /*pin=*/true));
        last_len = len;
      }
      for (int x : xr) x2r.push_back(b.mul(x, x, lanes));
      int sum_sq = reduce_row(b, x2r, x2r.size() == 1 ? last_len : lanes);
      int mean_sq = b.mul(sum_sq, b.cst(1.0 / static_cast<double>(d), 1), 1);
      int inv_std = -1, neg_mean = -1;
      if (is_ln) {
        int sum_x = reduce_row(b, std::vector<int>(xr), xr.size() == 1 ? last_len : lanes);
        int mean = b.mul(sum_x, b.cst(1.0 / static_cast<double>(d), 1), 1);
        int m2 = b.mul(mean, mean, 1);
        int var = b.add(mean_sq, b.mul(m2, b.cst(-1.0, 1), 1), 1);
        int vpe = b.add(var, b.cst(n.eps, 1), 1);
        inv_std = b.isqrt(vpe, 1);
        neg_mean = b.mul(mean, b.cst(-1.0, 1), 1);
      } else {
        int vpe = b.add(mean_sq, b.cst(n.eps, 1), 1);
        inv_std = b.isqrt(vpe, 1);
      }
      // Broadcast scalars via the scratch round trip.
      int64_t slot = scratch + 4 * r;
      b.store16(inv_std, slot, 1);
      int inv_b = b.bcast(slot, lanes);
      int negm_b = -1;
      if (is_ln) {
        b.store16(neg_mean, slot + 2, 1);
        negm_b = b.bcast(slot + 2, lanes);
      }
      for (int64_t c0 = 0; c0 < d; c0 += lanes) {
        int len = static_cast<int>(std::min<int64_t>(lanes, d - c0));
        int x = xr[static_cast<size_t>(c0 / lanes)];
        int y = is_ln ? b.mul(b.add(x, negm_b, len), inv_b, len) : b.mul(x, inv_b, len);
        if (gp) y = b.mul(y, b.load(gp->byte_offset + c0 * 2, len), len);
        if (bp) y = b.add(y, b.load(bp->byte_offset + c0 * 2, len), len);
        emit_store(b, y, ov.base + r * ov.stride + c0 * (sink.int8 ? 1 : 2), len, sink);
      }
    }
    return std::move(b.ch);
  }

  Chain build_chain(const Node& n, int item) {
    switch (n.op) {
      case OpKind::Softmax: return chain_softmax(n, item);
      case OpKind::LayerNorm:
      case OpKind::RmsNorm: return chain_norm(n, item);
      default: return chain_elementwise(n, item);
    }
  }

  void emit_item(Emitter& em, int item, bool record_chains) {
    for (const auto& n : g.nodes) {
      if (n.op == OpKind::MatMul) {
        emit_matmul(em, n, item);
        continue;
      }
      // Build at the requested software-pipelining depth; on register
      // pressure, step the depth down and rebuild.
      CompileOptions saved = opt;
      Emitter snapshot = em;
      bool done = false;
      for (int depth = opt.interleave; !done; depth = depth > 2 ? depth / 2 : depth - 1) {
        opt.interleave = std::max(1, depth);
        Chain ch = build_chain(n, item);
        try {
          lower_chain(em, ch);
          done = true;
          if (record_chains) {
            chains.push_back(std::move(ch));
            ++stats.chains;
          }
        } catch (const CompileError& e) {
          em = snapshot;
          if (depth <= 1) {
            opt = saved;
            throw CompileError("node " + n.id + ": " + e.what());
          }
        }
      }
      opt = saved;
    }
  }

  LoweredProgram run() {
    for (const auto& n : g.nodes)
      for (const auto& i : n.inputs) consumer_count[i] += 1;
    for (const auto& n : g.nodes)
      if (aliases_input(n)) alias[n.output] = n.inputs[0];
    place_all();
    manifest.config_fingerprint = config_fingerprint(cfg);

    LoweredProgram lp;
    for (int core = 0; core < cfg.cores; ++core) {
      Emitter em(cfg);
      for (int item = core; item < opt.batch; item += cfg.cores)
        emit_item(em, item, core == 0 && item == 0);
      em.halt();
      std::vector<uint64_t> words;
      words.reserve(em.out.size());
      for (const auto& i : em.out) words.push_back(isa::encode(i));
      validate_program(words);
      stats.instructions += static_cast<int64_t>(words.size());
      lp.per_core.push_back(std::move(words));
    }
    lp.manifest = manifest;
    lp.memory_image = image;
    lp.chains = std::move(chains);
    lp.stats = stats;
    return lp;
  }
};

}  // namespace

LoweredProgram compile(const Graph& g, const machine::MachineConfig& cfg,
                       const CompileOptions& opt) {
  Graph fused = graph::fuse(g);
  Compiler c(fused, cfg, opt);
  return c.run();
}

void validate_program(const std::vector<uint64_t>& words) {
  if (words.empty() || isa::decode(words.back()).opcode != Opcode::Halt)
    throw CompileError("program must end with HALT");
  std::set<uint8_t> written;
  std::set<uint8_t> consts_set;
  bool dmb_mat = false, dmb_vec = false;
  auto readable = [&](uint8_t r) {
    if (isa::is_const_reg(r)) return consts_set.count(r) > 0;
    if (r == isa::kRegDmb) return dmb_vec;
    return written.count(r) > 0;
  };
  for (size_t k = 0; k < words.size(); ++k) {
    Instruction i = isa::decode(words[k]);
    isa::validate(i);
    if (k + 1 != words.size() && i.opcode == Opcode::Halt)
      throw CompileError("HALT before end of program");
    switch (i.opcode) {
      case Opcode::Config: {
        uint8_t base = static_cast<uint8_t>(ConfigId::ConstBase);
        if (i.dst >= base && i.dst < base + isa::kConstRegs)
          consts_set.insert(static_cast<uint8_t>(isa::kRegConstBase + (i.dst - base)));
        break;
      }
      case Opcode::LoadM:
      case Opcode::LoadV:
        written.insert(i.dst);
        break;
      case Opcode::MatMul:
        if (!written.count(i.srcA) || !written.count(i.srcB))
          throw CompileError("MATMUL consumes an unloaded bank");
        dmb_mat = true;
        break;
      case Opcode::MulV:
      case Opcode::AddV:
      case Opcode::AppV: {
        bool uses_b = i.opcode == Opcode::MulV ||
                      (i.opcode == Opcode::AddV && !(i.flags & isa::kFlagFold));
        if (!readable(i.srcA) || (uses_b && !readable(i.srcB)))
          throw CompileError("vector op reads an unwritten register");
        if (i.dst == isa::kRegDmb) dmb_vec = true;
        else written.insert(i.dst);
        break;
      }
      case Opcode::StoreM:
        if (!dmb_mat) throw CompileError("STORE.M before any MATMUL");
        break;
      case Opcode::StoreV:
        if (!readable(i.srcA)) throw CompileError("STORE.V reads an unwritten register");
        break;
      case Opcode::Halt:
        break;
    }
  }
}

std::string config_fingerprint(const machine::MachineConfig& cfg) {
  std::string s;
  auto add = [&](int64_t v) { s += std::to_string(v) + ","; };
  add(cfg.cores); add(cfg.dmpus); add(cfg.pe_cols); add(cfg.pack);
  add(cfg.freq_mhz); add(cfg.d_mat); add(cfg.d_fpv); add(cfg.mem_latency);
  add(cfg.mem_bytes_per_cycle); add(cfg.load_ports); add(cfg.acc_bits);
  add(cfg.mem_bytes); add(cfg.watchdog_cycles); add(cfg.timing ? 1 : 0);
  add(cfg.arith.magic); add(cfg.arith.newton_iters); add(cfg.arith.exp_frac_lut ? 1 : 0);
  uint64_t h = 1469598103934665603ull;
  for (char c : s) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string manifest_to_json(const Manifest& m) {
  nlohmann::ordered_json j;
  j["config_fingerprint"] = m.config_fingerprint;
  j["scratch_base"] = m.scratch_base;
  j["total_bytes"] = m.total_bytes;
  if (!m.program_files.empty()) j["programs"] = m.program_files;
  j["tensors"] = nlohmann::ordered_json::array();
  for (const auto& [name, p] : m.tensors) {
    nlohmann::ordered_json jt;
    jt["name"] = name;
    jt["offset"] = p.byte_offset;
    jt["shape"] = p.shape;
    jt["padded"] = p.padded;
    jt["dtype"] = p.format == Format::Int8 ? "int8" : "bf16";
    jt["scale"] = p.scale;
    j["tensors"].push_back(jt);
  }
  return j.dump(2);
}

Manifest manifest_from_json(const std::string& text) {
  Manifest m;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    m.config_fingerprint = j.value("config_fingerprint", "");
    m.scratch_base = j.at("scratch_base").get<int64_t>();
    m.total_bytes = j.at("total_bytes").get<int64_t>();
    if (j.contains("programs"))
      for (const auto& p : j.at("programs")) m.program_files.push_back(p.get<std::string>());
    for (const auto& jt : j.at("tensors")) {
      TensorPlacement p;
      p.name = jt.at("name").get<std::string>();
      p.byte_offset = jt.at("offset").get<int64_t>();
      for (const auto& d : jt.at("shape")) p.shape.push_back(d.get<int64_t>());
      for (const auto& d : jt.at("padded")) p.padded.push_back(d.get<int64_t>());
      p.format = jt.at("dtype").get<std::string>() == "int8" ? Format::Int8 : Format::Bf16;
      p.scale = jt.at("scale").get<double>();
      int64_t elem = p.format == Format::Int8 ? 1 : 2;
      p.bytes = p.padded[0] * p.padded[1] * elem;
      m.tensors.emplace(p.name, p);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  return m;
}

std::vector<double> read_tensor(const std::vector<uint8_t>& memory, const TensorPlacement& p,
                                bool dequantize) {
  int64_t cols = p.shape.empty() ? 1 : p.shape.back();
  int64_t rows = 1;
  for (size_t k = 0; k + 1 < p.shape.size(); ++k) rows *= p.shape[k];
  std::vector<double> out;
  out.reserve(static_cast<size_t>(rows * cols));
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      if (p.format == Format::Int8) {
        auto q = static_cast<int8_t>(memory[static_cast<size_t>(p.byte_offset + r * p.padded[1] + c)]);
        out.push_back(dequantize ? q * p.scale : static_cast<double>(q));
      } else {
        size_t b = static_cast<size_t>(p.byte_offset + (r * p.padded[1] + c) * 2);
        uint16_t bits = static_cast<uint16_t>(memory[b] | (memory[b + 1] << 8));
        out.push_back(Bf16::from_bits(bits).to_double());
      }
    }
  return out;
}

std::vector<uint16_t> read_tensor_bits(const std::vector<uint8_t>& memory, const TensorPlacement& p) {
  int64_t cols = p.shape.empty() ? 1 : p.shape.back();
  int64_t rows = 1;
  for (size_t k = 0; k + 1 < p.shape.size(); ++k) rows *= p.shape[k];
  std::vector<uint16_t> out;
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) {
      size_t b = static_cast<size_t>(p.byte_offset + (r * p.padded[1] + c) * 2);
      out.push_back(static_cast<uint16_t>(memory[b] | (memory[b + 1] << 8)));
    }
  return out;
}

}  // namespace tataa::compiler
