// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tataa/bfarith.hpp"
#include "tataa/isa.hpp"

namespace tataa::machine {

// Machine geometry and timing parameters. Defaults model the evaluated
// configuration: 8 cores, 8 DMPUs of 16x4 PEs each, so per core a 32x32
// effective systolic tile (with the combined-MAC packing factor) and 128
// SIMD lanes at 225 MHz.
struct MachineConfig {
  int cores = 8;            // K
  int dmpus = 8;            // N
  int pe_cols = 16;         // W
  int pack = 2;             // combined-MAC packing factor (X-direction rows)
  int freq_mhz = 225;
  int d_mat = 1024;         // matrix bank depth (max inner extent)
  int d_fpv = 64;           // vector register file depth
  int mem_latency = 100;    // cycles
  int mem_bytes_per_cycle = 32;  // per port (256-bit interface)
  int load_ports = 2;
  int acc_bits = 16;        // accumulator width, saturating
  int64_t mem_bytes = 1 << 24;
  int64_t watchdog_cycles = 200000000;
  bool timing = true;
  // Inference configuration: the exponent path uses the fraction-indexed
  // mantissa table (the scalar library default keeps the bare exponent
  // write).
  bfarith::ArithConfig arith = [] {
    bfarith::ArithConfig a;
    a.exp_frac_lut = true;
    return a;
  }();

  int tile_rows() const { return pack * pe_cols; }   // X-direction output extent
  int tile_cols() const { return 4 * dmpus; }        // Y-direction output extent
  int lanes() const { return pe_cols * dmpus; }      // SIMD width W*N
  double gflops_theoretical() const {
    return static_cast<double>(cores) * dmpus * pe_cols * freq_mhz / 1000.0;
  }
};

struct CycleReport {
  int64_t total_cycles = 0;
  int64_t instructions = 0;
  int64_t stall_cycles = 0;
  int64_t mode_switches = 0;
  int64_t overlap_cycles_saved = 0;  // sum of standalone latencies minus total
  std::map<std::string, int64_t> cycles_by_opcode;
  int64_t int8_ops = 0;   // 2 * MACs
  int64_t bf16_flops = 0; // one per produced lane
  double gops_int8 = 0.0;
  double gflops_bf16 = 0.0;
  double gflops_theoretical = 0.0;
  std::vector<int64_t> core_cycles;
};

struct TraceRow {
  int64_t cycle = 0;
  int core = 0;
  int64_t pc = 0;
  isa::Opcode opcode = isa::Opcode::Halt;
  uint8_t dst = 0, srcA = 0, srcB = 0;
  uint16_t addr = 0, len = 0;
  int64_t stall_cycles = 0;
};

std::string trace_to_csv(const std::vector<TraceRow>& rows);

// Runs one program per core against a shared external memory. Cores are
// independent (the compiler partitions work with no cross-core data
// dependence); they are advanced sequentially and deterministically.
CycleReport run(const std::vector<std::vector<uint64_t>>& per_core_programs,
                std::vector<uint8_t>& memory, const MachineConfig& cfg,
                std::vector<TraceRow>* trace = nullptr);

// Single-core convenience wrapper.
CycleReport run(const std::vector<uint64_t>& program, std::vector<uint8_t>& memory,
                const MachineConfig& cfg, std::vector<TraceRow>* trace = nullptr);

}  // namespace tataa::machine
