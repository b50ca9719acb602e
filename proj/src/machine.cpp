// SPDX-License-Identifier: Apache-2.0
//
// Functional + cycle-approximate model of a TATAA core: dual-mode systolic /
// SIMD datapath, register files, dual-mode buffers, quantization and layout
// conversion on the store path, dual-port load timing with outstanding
// transactions, and an in-order issue scoreboard. Values never depend on the
// timing model.

#include "tataa/machine.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "tataa/errors.hpp"
#include "tataa/quantize.hpp"

namespace tataa::machine {

namespace {

using isa::Instruction;
using isa::Opcode;

enum class Mode { Int8MatMul, Bf16Simd };

// One 64-bit config register loaded as two 32-bit CONFIG payloads.
struct PairReg {
  uint32_t lo = 0, hi = 0;
  bool lo_set = false, hi_set = false;
  bool ready() const { return lo_set && hi_set; }
  double as_double() const {
    uint64_t u = (static_cast<uint64_t>(hi) << 32) | lo;
    double d;
    std::memcpy(&d, &u, 8);
    return d;
  }
};

struct MatrixBank {
  std::vector<int8_t> data;  // row-major
  int rows = 0, cols = 0;
  bool loaded = false;
};

struct Core {
  const MachineConfig& cfg;
  std::vector<uint8_t>& mem;
  int core_id;

  // Architectural state.
  Mode mode = Mode::Int8MatMul;
  std::array<MatrixBank, 2> rmx;
  std::array<MatrixBank, 2> rmy;
  std::vector<std::vector<uint16_t>> vx, vy;
  std::vector<bool> vx_written, vy_written;
  std::array<uint16_t, isa::kConstRegs> consts{};
  std::vector<int32_t> dmb_mat;
  bool dmb_mat_valid = false;
  std::vector<uint16_t> dmb_vec;
  bool dmb_vec_valid = false;

  uint32_t seg_load = 0, seg_store = 0;
  uint32_t stride_x = 0, stride_y = 0, stride_store = 0;
  PairReg requant_mul, dequant_mul, quant_div;

  // Scoreboard (cycle bookkeeping only).
  int64_t next_issue = 1;
  int64_t array_free = 0;
  int64_t vec_issue_free = 0;
  std::vector<int64_t> port_next_start;
  int64_t store_next_start = 0;
  std::array<int64_t, 256> write_done{};
  std::array<int64_t, 256> read_until{};
  // In-flight store address windows; a later load overlapping one waits for
  // its completion (in-order memory per core).
  struct StoreWindow {
    size_t begin, end;
    int64_t done;
  };
  std::vector<StoreWindow> inflight_stores;
  int64_t horizon = 0;  // latest completion seen
  int64_t sum_latency = 0;

  CycleReport& rep;
  std::vector<TraceRow>* trace;

  Core(const MachineConfig& c, std::vector<uint8_t>& m, int id, CycleReport& r,
       std::vector<TraceRow>* t)
      : cfg(c), mem(m), core_id(id), rep(r), trace(t) {
    vx.assign(isa::kVectorRegsPerSide, std::vector<uint16_t>(static_cast<size_t>(cfg.lanes()), 0));
    vy.assign(isa::kVectorRegsPerSide, std::vector<uint16_t>(static_cast<size_t>(cfg.lanes()), 0));
    vx_written.assign(isa::kVectorRegsPerSide, false);
    vy_written.assign(isa::kVectorRegsPerSide, false);
    dmb_mat.assign(static_cast<size_t>(cfg.tile_rows()) * static_cast<size_t>(cfg.tile_cols()), 0);
    dmb_vec.assign(static_cast<size_t>(cfg.lanes()), 0);
    port_next_start.assign(static_cast<size_t>(cfg.load_ports), 0);
  }

  [[noreturn]] void fail(const std::string& why) const {
    throw RunError("core " + std::to_string(core_id) + ": " + why);
  }

  // ---- memory helpers -------------------------------------------------

  size_t byte_addr(uint32_t seg, uint16_t addr12) const {
    return (static_cast<size_t>(seg) << 12 | addr12) * 2;
  }

  void check_range(size_t base, size_t bytes) const {
    if (base + bytes > mem.size()) fail("address out of range");
  }

  uint16_t load_u16(size_t b) const {
    return static_cast<uint16_t>(mem[b] | (mem[b + 1] << 8));
  }
  void store_u16(size_t b, uint16_t v) {
    mem[b] = static_cast<uint8_t>(v & 0xFF);
    mem[b + 1] = static_cast<uint8_t>(v >> 8);
  }

  // ---- per-register scoreboard ----------------------------------------

  void set_mode(Mode m) {
    if (mode != m) {
      mode = m;
      ++rep.mode_switches;
    }
  }

  std::vector<uint16_t>& vreg(uint8_t r, bool for_write) {
    if (r >= isa::kRegVxBase && r < isa::kRegVxBase + isa::kVectorRegsPerSide) {
      if (for_write) vx_written[r - isa::kRegVxBase] = true;
      else if (!vx_written[r - isa::kRegVxBase]) fail("read of unwritten " + isa::reg_name(r));
      return vx[r - isa::kRegVxBase];
    }
    if (r >= isa::kRegVyBase && r < isa::kRegVyBase + isa::kVectorRegsPerSide) {
      if (for_write) vy_written[r - isa::kRegVyBase] = true;
      else if (!vy_written[r - isa::kRegVyBase]) fail("read of unwritten " + isa::reg_name(r));
      return vy[r - isa::kRegVyBase];
    }
    fail("not a vector register: " + isa::reg_name(r));
  }

  // Lane view of a source operand: vector register, broadcast constant, or
  // the dual-mode buffer.
  std::vector<uint16_t> src_lanes(uint8_t r) {
    if (isa::is_const_reg(r))
      return std::vector<uint16_t>(static_cast<size_t>(cfg.lanes()), consts[r - isa::kRegConstBase]);
    if (r == isa::kRegDmb) {
      if (!dmb_vec_valid) fail("read of empty DMB vector");
      return dmb_vec;
    }
    return vreg(r, false);
  }

  void write_lanes(uint8_t r, const std::vector<uint16_t>& lanes) {
    if (r == isa::kRegDmb) {
      dmb_vec = lanes;
      dmb_vec_valid = true;
      return;
    }
    vreg(r, true) = lanes;
  }

  // ---- functional execution -------------------------------------------

  void exec_config(const Instruction& i) {
    uint32_t payload = i.config_payload();
    using isa::ConfigId;
    if (i.dst >= static_cast<uint8_t>(ConfigId::ConstBase)) {
      uint8_t k = i.dst - static_cast<uint8_t>(ConfigId::ConstBase);
      if (k >= isa::kConstRegs) fail("config: constant index out of range");
      consts[k] = static_cast<uint16_t>(payload & 0xFFFF);
      return;
    }
    switch (static_cast<ConfigId>(i.dst)) {
      case ConfigId::SegLoad: seg_load = payload; break;
      case ConfigId::SegStore: seg_store = payload; break;
      case ConfigId::StrideX: stride_x = payload; break;
      case ConfigId::StrideY: stride_y = payload; break;
      case ConfigId::StrideStore: stride_store = payload; break;
      case ConfigId::RequantMulLo: requant_mul.lo = payload; requant_mul.lo_set = true; break;
      case ConfigId::RequantMulHi: requant_mul.hi = payload; requant_mul.hi_set = true; break;
      case ConfigId::DequantMulLo: dequant_mul.lo = payload; dequant_mul.lo_set = true; break;
      case ConfigId::DequantMulHi: dequant_mul.hi = payload; dequant_mul.hi_set = true; break;
      case ConfigId::QuantDivLo: quant_div.lo = payload; quant_div.lo_set = true; break;
      case ConfigId::QuantDivHi: quant_div.hi = payload; quant_div.hi_set = true; break;
      default: fail("config: unknown id " + std::to_string(i.dst));
    }
  }

  size_t load_bytes(const Instruction& i) const {
    if (i.opcode == Opcode::LoadV) return (i.flags & isa::kFlagBroadcast) ? 2 : size_t(i.len) * 2;
    // LOAD.M: an X tile is tile_rows x len, a Y tile len x tile_cols int8.
    bool is_x = i.dst == isa::kRegRmx0 || i.dst == isa::kRegRmx1;
    return size_t(i.len) * static_cast<size_t>(is_x ? cfg.tile_rows() : cfg.tile_cols());
  }

  void exec_load_m(const Instruction& i) {
    if (i.len > cfg.d_mat) fail("LOAD.M: tile exceeds bank depth");
    bool is_x = i.dst == isa::kRegRmx0 || i.dst == isa::kRegRmx1;
    MatrixBank& bank = is_x ? rmx[i.dst - isa::kRegRmx0] : rmy[i.dst - isa::kRegRmy0];
    int rows = is_x ? cfg.tile_rows() : i.len;
    int cols = is_x ? i.len : cfg.tile_cols();
    uint32_t stride_words = is_x ? stride_x : stride_y;
    size_t base = byte_addr(seg_load, i.addr);
    bank.data.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), 0);
    for (int r = 0; r < rows; ++r) {
      size_t rb = base + static_cast<size_t>(r) * stride_words * 2;
      check_range(rb, static_cast<size_t>(cols));
      for (int c = 0; c < cols; ++c)
        bank.data[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)] =
            static_cast<int8_t>(mem[rb + static_cast<size_t>(c)]);
    }
    bank.rows = rows;
    bank.cols = cols;
    bank.loaded = true;
  }

  void exec_load_v(const Instruction& i) {
    if (i.len > cfg.lanes()) fail("LOAD.V: vector length exceeds lanes");
    std::vector<uint16_t> lanes(static_cast<size_t>(cfg.lanes()), 0);
    size_t base = byte_addr(seg_load, i.addr);
    if (i.flags & isa::kFlagBroadcast) {
      check_range(base, 2);
      uint16_t v = load_u16(base);
      for (int l = 0; l < i.len; ++l) lanes[static_cast<size_t>(l)] = v;
    } else {
      check_range(base, static_cast<size_t>(i.len) * 2);
      for (int l = 0; l < i.len; ++l) lanes[static_cast<size_t>(l)] = load_u16(base + static_cast<size_t>(l) * 2);
    }
    write_lanes(i.dst, lanes);
  }

  void exec_matmul(const Instruction& i) {
    set_mode(Mode::Int8MatMul);
    const MatrixBank& x = rmx[i.srcA - isa::kRegRmx0];
    const MatrixBank& y = rmy[i.srcB - isa::kRegRmy0];
    if (!x.loaded || !y.loaded) fail("MATMUL: bank not loaded");
    if (x.cols != i.len || y.rows != i.len) fail("MATMUL: tile shape mismatch");
    int rows = cfg.tile_rows(), cols = cfg.tile_cols();
    int64_t lo = -(int64_t(1) << (cfg.acc_bits - 1));
    int64_t hi = (int64_t(1) << (cfg.acc_bits - 1)) - 1;
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        int64_t acc = 0;
        for (int k = 0; k < i.len; ++k) {
          acc += int64_t(x.data[static_cast<size_t>(r) * static_cast<size_t>(x.cols) + static_cast<size_t>(k)]) *
                 int64_t(y.data[static_cast<size_t>(k) * static_cast<size_t>(y.cols) + static_cast<size_t>(c)]);
          acc = std::clamp(acc, lo, hi);
        }
        dmb_mat[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)] =
            static_cast<int32_t>(acc);
      }
    dmb_mat_valid = true;
    rep.int8_ops += 2ll * rows * cols * i.len;
  }

  void exec_vector(const Instruction& i) {
    set_mode(Mode::Bf16Simd);
    if (i.len > cfg.lanes()) fail("vector length exceeds lanes");
    std::vector<uint16_t> out(static_cast<size_t>(cfg.lanes()), 0);
    auto a = src_lanes(i.srcA);
    const auto& acfg = cfg.arith;
    if (i.opcode == Opcode::MulV) {
      auto b = src_lanes(i.srcB);
      for (int l = 0; l < i.len; ++l)
        out[static_cast<size_t>(l)] =
            bfarith::fpmul(Bf16::from_bits(a[static_cast<size_t>(l)]), Bf16::from_bits(b[static_cast<size_t>(l)])).bits;
      rep.bf16_flops += i.len;
    } else if (i.opcode == Opcode::AddV) {
      auto fn = static_cast<isa::LaneFn>((i.flags & isa::kQuantModeMask) >> isa::kQuantModeShift);
      auto apply = [&](Bf16 u, Bf16 v) {
        switch (fn) {
          case isa::LaneFn::Max: return bfarith::fpmax(u, v);
          case isa::LaneFn::Min: return bfarith::fpmin(u, v);
          default: return bfarith::fpadd(u, v, acfg);
        }
      };
      if (i.flags & isa::kFlagFold) {
        int half = (i.len + 1) / 2;
        for (int l = 0; l < half; ++l) {
          Bf16 u = Bf16::from_bits(a[static_cast<size_t>(2 * l)]);
          Bf16 v = 2 * l + 1 < i.len ? Bf16::from_bits(a[static_cast<size_t>(2 * l + 1)]) : Bf16::zero();
          out[static_cast<size_t>(l)] = apply(u, v).bits;
        }
        rep.bf16_flops += half;
      } else {
        auto b = src_lanes(i.srcB);
        for (int l = 0; l < i.len; ++l)
          out[static_cast<size_t>(l)] =
              apply(Bf16::from_bits(a[static_cast<size_t>(l)]), Bf16::from_bits(b[static_cast<size_t>(l)])).bits;
        rep.bf16_flops += i.len;
      }
    } else {  // APP.V
      for (int l = 0; l < i.len; ++l) {
        Bf16 v = Bf16::from_bits(a[static_cast<size_t>(l)]);
        Bf16 r = (i.flags & isa::kFlagExp2) ? bfarith::exp2_floor(v, acfg)
                                            : bfarith::fpapp(v, i.flags & isa::kFlagRawApp, acfg);
        out[static_cast<size_t>(l)] = r.bits;
      }
      rep.bf16_flops += i.len;
    }
    write_lanes(i.dst, out);
  }

  size_t store_elem_bytes(isa::QuantMode m) const {
    return (m == isa::QuantMode::Int8ToBf16 || m == isa::QuantMode::Bf16ToBf16) ? 2 : 1;
  }

  size_t store_bytes(const Instruction& i) const {
    auto m = static_cast<isa::QuantMode>((i.flags & isa::kQuantModeMask) >> isa::kQuantModeShift);
    size_t n = i.opcode == Opcode::StoreM ? static_cast<size_t>(i.len) * static_cast<size_t>(cfg.tile_cols())
                                          : static_cast<size_t>(i.len);
    return n * store_elem_bytes(m);
  }

  void exec_store_m(const Instruction& i) {
    auto qm = static_cast<isa::QuantMode>((i.flags & isa::kQuantModeMask) >> isa::kQuantModeShift);
    if (!dmb_mat_valid) fail("STORE.M: DMB empty");
    if (i.len > cfg.tile_rows()) fail("STORE.M: row count exceeds tile");
    int cols = cfg.tile_cols();
    size_t base = byte_addr(seg_store, i.addr);
    bool transpose = i.flags & isa::kFlagTranspose;
    for (int r = 0; r < i.len; ++r)
      for (int c = 0; c < cols; ++c) {
        int32_t acc = dmb_mat[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)];
        size_t row = transpose ? static_cast<size_t>(c) : static_cast<size_t>(r);
        size_t col = transpose ? static_cast<size_t>(r) : static_cast<size_t>(c);
        if (qm == isa::QuantMode::Int8ToInt8) {
          if (!requant_mul.ready()) fail("STORE.M: requantize multiplier not configured");
          size_t b = base + (row * stride_store) * 2 + col;
          check_range(b, 1);
          mem[b] = static_cast<uint8_t>(quantize::requantize_premul(acc, requant_mul.as_double()));
        } else if (qm == isa::QuantMode::Int8ToBf16) {
          if (!dequant_mul.ready()) fail("STORE.M: dequantize multiplier not configured");
          size_t b = base + (row * stride_store + col) * 2;
          check_range(b, 2);
          store_u16(b, quantize::dequantize_premul(acc, dequant_mul.as_double()).bits);
        } else {
          fail("STORE.M: quant mode must convert from integer accumulators");
        }
      }
  }

  void exec_store_v(const Instruction& i) {
    auto qm = static_cast<isa::QuantMode>((i.flags & isa::kQuantModeMask) >> isa::kQuantModeShift);
    if (i.len > cfg.lanes()) fail("STORE.V: vector length exceeds lanes");
    auto lanes = src_lanes(i.srcA);
    size_t base = byte_addr(seg_store, i.addr);
    if (qm == isa::QuantMode::Bf16ToBf16) {
      check_range(base, static_cast<size_t>(i.len) * 2);
      for (int l = 0; l < i.len; ++l) store_u16(base + static_cast<size_t>(l) * 2, lanes[static_cast<size_t>(l)]);
    } else if (qm == isa::QuantMode::Bf16ToInt8) {
      if (!quant_div.ready()) fail("STORE.V: output scale not configured");
      check_range(base, static_cast<size_t>(i.len));
      for (int l = 0; l < i.len; ++l)
        mem[base + static_cast<size_t>(l)] = static_cast<uint8_t>(
            quantize::bf16_to_int8(Bf16::from_bits(lanes[static_cast<size_t>(l)]), quant_div.as_double()));
    } else {
      fail("STORE.V: quant mode must convert from bfloat16 lanes");
    }
  }

  // ---- issue + timing ---------------------------------------------------

  // Returns the completion cycle of the whole instruction.
  int64_t step(const Instruction& i, int64_t pc) {
    int64_t t = next_issue;
    int64_t done = t;
    int64_t xfer = 0;
    switch (i.opcode) {
      case Opcode::Config:
        exec_config(i);
        break;
      case Opcode::LoadM:
      case Opcode::LoadV: {
        t = std::max({t, read_until[i.dst], write_done[i.dst]});
        size_t bytes = load_bytes(i);
        xfer = static_cast<int64_t>((bytes + static_cast<size_t>(cfg.mem_bytes_per_cycle) - 1) /
                                    static_cast<size_t>(cfg.mem_bytes_per_cycle));
        auto p = std::min_element(port_next_start.begin(), port_next_start.end()) - port_next_start.begin();
        int64_t s = std::max(t, port_next_start[static_cast<size_t>(p)]);
        size_t lb = byte_addr(seg_load, i.addr);
        uint32_t lstride = (i.dst == isa::kRegRmx0 || i.dst == isa::kRegRmx1) ? stride_x : stride_y;
        size_t le = lb + (i.opcode == Opcode::LoadM
                              ? static_cast<size_t>(cfg.tile_rows()) * std::max<uint32_t>(1, lstride) * 2
                              : bytes);
        for (const auto& w : inflight_stores)
          if (lb < w.end && w.begin < le) s = std::max(s, w.done);
        port_next_start[static_cast<size_t>(p)] = s + xfer;  // outstanding: next transfer may start behind this one
        done = s + cfg.mem_latency + xfer;
        write_done[i.dst] = done;
        if (i.opcode == Opcode::LoadM) exec_load_m(i);
        else exec_load_v(i);
        break;
      }
      case Opcode::MatMul: {
        t = std::max({t, array_free, write_done[i.srcA], write_done[i.srcB],
                      read_until[isa::kRegDmb], write_done[isa::kRegDmb]});
        exec_matmul(i);
        int64_t dur = i.len + cfg.tile_rows() + cfg.tile_cols() - 2;
        done = t + dur;
        array_free = done;
        write_done[isa::kRegDmb] = done;
        read_until[i.srcA] = std::max(read_until[i.srcA], done);
        read_until[i.srcB] = std::max(read_until[i.srcB], done);
        break;
      }
      case Opcode::MulV:
      case Opcode::AddV:
      case Opcode::AppV: {
        t = std::max({t, vec_issue_free, write_done[i.srcA], read_until[i.dst]});
        bool uses_b = i.opcode == Opcode::MulV ||
                      (i.opcode == Opcode::AddV && !(i.flags & isa::kFlagFold));
        if (uses_b) t = std::max(t, write_done[i.srcB]);
        exec_vector(i);
        done = t + 4;  // 4-stage PE pipeline
        vec_issue_free = t + 1;
        write_done[i.dst] = done;
        break;
      }
      case Opcode::StoreM:
      case Opcode::StoreV: {
        t = std::max({t, write_done[i.srcA]});
        size_t bytes = store_bytes(i);
        xfer = static_cast<int64_t>((bytes + static_cast<size_t>(cfg.mem_bytes_per_cycle) - 1) /
                                    static_cast<size_t>(cfg.mem_bytes_per_cycle));
        int64_t s = std::max(t, store_next_start);
        store_next_start = s + xfer;
        done = s + xfer;
        read_until[i.srcA] = std::max(read_until[i.srcA], done);
        size_t sb = byte_addr(seg_store, i.addr);
        size_t extent = i.opcode == Opcode::StoreM
                            ? static_cast<size_t>(cfg.tile_cols()) * std::max<uint32_t>(1, stride_store) * 2
                            : bytes;
        std::erase_if(inflight_stores, [&](const StoreWindow& w) { return w.done <= t; });
        inflight_stores.push_back({sb, sb + extent, done});
        if (i.opcode == Opcode::StoreM) exec_store_m(i);
        else exec_store_v(i);
        break;
      }
      case Opcode::Halt:
        break;
    }
    if (!cfg.timing) {
      t = next_issue;
      done = t;
    }
    int64_t stall = t - next_issue;
    rep.stall_cycles += stall;
    rep.instructions += 1;
    rep.cycles_by_opcode[isa::mnemonic(i.opcode)] += cfg.timing ? (done - t + 1) : 1;
    sum_latency += cfg.timing ? (done - t + 1) : 1;
    next_issue = t + 1;
    horizon = std::max({horizon, done, t});
    if (horizon > cfg.watchdog_cycles) fail("watchdog cycle cap exceeded");
    if (trace) trace->push_back({t, core_id, pc, i.opcode, i.dst, i.srcA, i.srcB, i.addr, i.len, stall});
    return done;
  }

  int64_t run_program(const std::vector<uint64_t>& words) {
    for (size_t pc = 0; pc < words.size(); ++pc) {
      Instruction i = isa::decode(words[pc]);
      isa::validate(i);
      step(i, static_cast<int64_t>(pc));
      if (i.opcode == Opcode::Halt) return horizon;
    }
    fail("program ran off the end without HALT");
  }
};

}  // namespace

std::string trace_to_csv(const std::vector<TraceRow>& rows) {
  std::ostringstream out;
  out << "cycle,core,pc,opcode,dst,srcA,srcB,addr,len,stall_cycles\n";
  for (const auto& r : rows) {
    out << r.cycle << ',' << r.core << ',' << r.pc << ',' << isa::mnemonic(r.opcode) << ','
        << static_cast<int>(r.dst) << ',' << static_cast<int>(r.srcA) << ','
        << static_cast<int>(r.srcB) << ',' << r.addr << ',' << r.len << ',' << r.stall_cycles
        << '\n';
  }
  return out.str();
}

CycleReport run(const std::vector<std::vector<uint64_t>>& per_core_programs,
                std::vector<uint8_t>& memory, const MachineConfig& cfg,
                std::vector<TraceRow>* trace) {
  if (per_core_programs.size() > static_cast<size_t>(cfg.cores))
    throw RunError("more programs than cores");
  if (memory.size() < static_cast<size_t>(cfg.mem_bytes)) memory.resize(static_cast<size_t>(cfg.mem_bytes), 0);
  CycleReport rep;
  rep.gflops_theoretical = cfg.gflops_theoretical();
  int64_t sum_latency = 0;
  for (size_t k = 0; k < per_core_programs.size(); ++k) {
    Core core(cfg, memory, static_cast<int>(k), rep, trace);
    int64_t cycles = core.run_program(per_core_programs[k]);
    rep.core_cycles.push_back(cycles);
    rep.total_cycles = std::max(rep.total_cycles, cycles);
    sum_latency += core.sum_latency;
  }
  rep.overlap_cycles_saved = std::max<int64_t>(0, sum_latency - rep.total_cycles);
  double seconds = rep.total_cycles / (cfg.freq_mhz * 1e6);
  if (seconds > 0) {
    rep.gops_int8 = rep.int8_ops / seconds / 1e9;
    rep.gflops_bf16 = rep.bf16_flops / seconds / 1e9;
  }
  return rep;
}

CycleReport run(const std::vector<uint64_t>& program, std::vector<uint8_t>& memory,
                const MachineConfig& cfg, std::vector<TraceRow>* trace) {
  return run(std::vector<std::vector<uint64_t>>{program}, memory, cfg, trace);
}

}  // namespace tataa::machine
