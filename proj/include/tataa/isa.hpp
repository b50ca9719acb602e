// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tataa::isa {

// The nine machine operations plus the stream terminator.
enum class Opcode : uint8_t {
  Config = 0x01,
  LoadM = 0x02,
  LoadV = 0x03,
  MatMul = 0x10,
  MulV = 0x20,
  AddV = 0x21,
  AppV = 0x22,
  StoreM = 0x30,
  StoreV = 0x31,
  Halt = 0xFF,
};

const char* mnemonic(Opcode op);
bool opcode_valid(uint8_t raw);

// Register / buffer address space shared by the assembler, the machine and
// the compiler. VX/VY are the SIMD vector registers (W*N lanes each) backed
// by the RFY banks; C0..C15 are broadcast constant registers fed by CONFIG.
inline constexpr uint8_t kRegDmb = 0x00;
inline constexpr uint8_t kRegRmx0 = 0x01;
inline constexpr uint8_t kRegRmx1 = 0x02;
inline constexpr uint8_t kRegRmy0 = 0x03;
inline constexpr uint8_t kRegRmy1 = 0x04;
inline constexpr uint8_t kRegVxBase = 0x10;  // VX0..VX{R_v-1}
inline constexpr uint8_t kRegVyBase = 0x20;  // VY0..VY{R_v-1}
inline constexpr uint8_t kRegConstBase = 0x30;  // C0..C15
inline constexpr int kVectorRegsPerSide = 8;    // R_v
inline constexpr int kConstRegs = 16;

bool is_matrix_bank(uint8_t r);
bool is_vector_reg(uint8_t r);
bool is_const_reg(uint8_t r);
std::string reg_name(uint8_t r);
bool reg_from_name(const std::string& name, uint8_t& out);

// Flag bits (4-bit field). Meaning depends on the opcode:
//   STORE.M/STORE.V: bit0 = transpose (M only), bits2:1 = quant-unit mode
//   LOAD.V:          bit0 = broadcast one element to all lanes
//   ADD.V:           bit0 = pairwise lane fold, bits2:1 = 01 max / 10 min
//   APP.V:           bit0 = 2^floor exponent-write mode, bit3 = raw seed
inline constexpr uint8_t kFlagTranspose = 0x1;
inline constexpr uint8_t kFlagBroadcast = 0x1;
inline constexpr uint8_t kFlagFold = 0x1;
inline constexpr uint8_t kFlagExp2 = 0x1;
inline constexpr uint8_t kFlagRawApp = 0x8;
inline constexpr uint8_t kQuantModeShift = 1;
inline constexpr uint8_t kQuantModeMask = 0x6;

// Quant-unit conversion selected by STORE flags bits2:1.
enum class QuantMode : uint8_t {
  Int8ToInt8 = 0,   // requantize with Sx*Sy/Sz
  Int8ToBf16 = 1,   // dequantize with Sx*Sy
  Bf16ToInt8 = 2,   // floor(v/Sz)
  Bf16ToBf16 = 3,   // pass-through
};

// ADD.V lane function selected by flags bits2:1.
enum class LaneFn : uint8_t { Add = 0, Max = 1, Min = 2 };

// CONFIG register ids (dst field). 64-bit values are loaded as lo/hi pairs.
enum class ConfigId : uint8_t {
  SegLoad = 0x01,     // load-address segment: effective = (seg << 12) | addr
  SegStore = 0x02,    // store-address segment
  StrideX = 0x03,     // LOAD.M row stride for RMX tiles, in 16-bit words
  StrideY = 0x04,     // LOAD.M row stride for RMY tiles, in 16-bit words
  StrideStore = 0x05, // STORE.M row stride, in 16-bit words
  RequantMulLo = 0x06,
  RequantMulHi = 0x07,
  DequantMulLo = 0x08,
  DequantMulHi = 0x09,
  QuantDivLo = 0x0A,  // Sz for the bfloat16 -> int8 mode
  QuantDivHi = 0x0B,
  ConstBase = 0x10,   // 0x10+k sets constant register k (payload = bf16 bits)
};

// One decoded instruction. addr is the 12-bit in-segment word offset (the
// 24-bit effective word address is formed with the CONFIG segment base).
// For CONFIG, payload is carried in srcA/srcB/len: payload = srcA<<24 |
// srcB<<16 | len.
struct Instruction {
  Opcode opcode = Opcode::Halt;
  uint8_t dst = 0;
  uint8_t srcA = 0;
  uint8_t srcB = 0;
  uint16_t len = 0;
  uint16_t addr = 0;  // 12-bit
  uint8_t flags = 0;  // 4-bit

  uint32_t config_payload() const {
    return (static_cast<uint32_t>(srcA) << 24) | (static_cast<uint32_t>(srcB) << 16) | len;
  }
  static Instruction config(uint8_t id, uint32_t payload) {
    Instruction i;
    i.opcode = Opcode::Config;
    i.dst = id;
    i.srcA = static_cast<uint8_t>(payload >> 24);
    i.srcB = static_cast<uint8_t>((payload >> 16) & 0xFF);
    i.len = static_cast<uint16_t>(payload & 0xFFFF);
    return i;
  }

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

// Fixed 64-bit word: [63:56]=opcode [55:48]=dst [47:40]=srcA [39:32]=srcB
// [31:16]=len [15:4]=addr [3:0]=flags.
uint64_t encode(const Instruction& i);          // throws std::invalid_argument on field overflow / invalid fields
Instruction decode(uint64_t word);              // throws std::invalid_argument on unknown opcode

// Per-instruction structural validity (register classes per opcode).
void validate(const Instruction& i);            // throws std::invalid_argument

// Text format: one instruction per line, comma-separated operands, ';'
// comments. Hex accepts 0100H or 0x100; the disassembler emits the H form.
std::vector<uint64_t> assemble(const std::string& text);  // throws ParseError with line info
std::string disassemble(const std::vector<uint64_t>& words);
std::string disassemble_one(const Instruction& i);

// Binary program container: magic "TATA", version byte, u32 word count,
// then 64-bit little-endian words.
inline constexpr uint8_t kProgramVersion = 1;
void write_program(const std::string& path, const std::vector<uint64_t>& words);
std::vector<uint64_t> read_program(const std::string& path);
std::vector<uint8_t> serialize_program(const std::vector<uint64_t>& words);
std::vector<uint64_t> deserialize_program(const std::vector<uint8_t>& bytes);

}  // namespace tataa::isa
