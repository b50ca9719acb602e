// SPDX-License-Identifier: Apache-2.0

#include "tataa/isa.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "tataa/errors.hpp"

namespace tataa::isa {

const char* mnemonic(Opcode op) {
  switch (op) {
    case Opcode::Config: return "CONFIG";
    case Opcode::LoadM: return "LOAD.M";
    case Opcode::LoadV: return "LOAD.V";
    case Opcode::MatMul: return "MATMUL";
    case Opcode::MulV: return "MUL.V";
    case Opcode::AddV: return "ADD.V";
    case Opcode::AppV: return "APP.V";
    case Opcode::StoreM: return "STORE.M";
    case Opcode::StoreV: return "STORE.V";
    case Opcode::Halt: return "HALT";
  }
  return "?";
}

bool opcode_valid(uint8_t raw) {
  switch (static_cast<Opcode>(raw)) {
    case Opcode::Config:
    case Opcode::LoadM:
    case Opcode::LoadV:
    case Opcode::MatMul:
    case Opcode::MulV:
    case Opcode::AddV:
    case Opcode::AppV:
    case Opcode::StoreM:
    case Opcode::StoreV:
    case Opcode::Halt:
      return true;
  }
  return false;
}

bool is_matrix_bank(uint8_t r) { return r >= kRegRmx0 && r <= kRegRmy1; }
bool is_vector_reg(uint8_t r) {
  return (r >= kRegVxBase && r < kRegVxBase + kVectorRegsPerSide) ||
         (r >= kRegVyBase && r < kRegVyBase + kVectorRegsPerSide);
}
bool is_const_reg(uint8_t r) { return r >= kRegConstBase && r < kRegConstBase + kConstRegs; }

std::string reg_name(uint8_t r) {
  char buf[8];
  if (r == kRegDmb) return "DMB";
  if (r == kRegRmx0) return "RMX0";
  if (r == kRegRmx1) return "RMX1";
  if (r == kRegRmy0) return "RMY0";
  if (r == kRegRmy1) return "RMY1";
  if (r >= kRegVxBase && r < kRegVxBase + kVectorRegsPerSide) {
    std::snprintf(buf, sizeof buf, "VX%d", r - kRegVxBase);
    return buf;
  }
  if (r >= kRegVyBase && r < kRegVyBase + kVectorRegsPerSide) {
    std::snprintf(buf, sizeof buf, "VY%d", r - kRegVyBase);
    return buf;
  }
  if (is_const_reg(r)) {
    std::snprintf(buf, sizeof buf, "C%d", r - kRegConstBase);
    return buf;
  }
  std::snprintf(buf, sizeof buf, "R%02X", r);
  return buf;
}

bool reg_from_name(const std::string& name, uint8_t& out) {
  static const std::map<std::string, uint8_t> fixed = {
      {"DMB", kRegDmb}, {"RMX0", kRegRmx0}, {"RMX1", kRegRmx1},
      {"RMY0", kRegRmy0}, {"RMY1", kRegRmy1}};
  auto it = fixed.find(name);
  if (it != fixed.end()) {
    out = it->second;
    return true;
  }
  auto indexed = [&](const char* prefix, uint8_t base, int count) {
    size_t n = std::strlen(prefix);
    if (name.size() <= n || name.compare(0, n, prefix) != 0) return false;
    int idx = 0;
    for (size_t i = n; i < name.size(); ++i) {
      if (name[i] < '0' || name[i] > '9') return false;
      idx = idx * 10 + (name[i] - '0');
    }
    if (idx >= count) return false;
    out = static_cast<uint8_t>(base + idx);
    return true;
  };
  return indexed("VX", kRegVxBase, kVectorRegsPerSide) ||
         indexed("VY", kRegVyBase, kVectorRegsPerSide) ||
         indexed("C", kRegConstBase, kConstRegs);
}

void validate(const Instruction& i) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument(std::string(mnemonic(i.opcode)) + ": " + why);
  };
  if (i.addr > 0xFFF) fail("addr exceeds 12 bits");
  if (i.flags > 0xF) fail("flags exceed 4 bits");
  auto vec_src = [](uint8_t r) { return is_vector_reg(r) || is_const_reg(r); };
  switch (i.opcode) {
    case Opcode::Config:
      break;  // dst is a config id, payload is free-form
    case Opcode::LoadM:
      if (!is_matrix_bank(i.dst)) fail("dst must be a matrix bank");
      break;
    case Opcode::LoadV:
      if (!is_vector_reg(i.dst)) fail("dst must be a vector register");
      break;
    case Opcode::MatMul:
      if (i.dst != kRegDmb) fail("dst must be DMB");
      if (i.srcA != kRegRmx0 && i.srcA != kRegRmx1) fail("srcA must be an RMX bank");
      if (i.srcB != kRegRmy0 && i.srcB != kRegRmy1) fail("srcB must be an RMY bank");
      break;
    case Opcode::MulV:
      if (!is_vector_reg(i.dst) && i.dst != kRegDmb) fail("dst must be a vector register or DMB");
      if (!vec_src(i.srcA) || !vec_src(i.srcB)) fail("sources must be vector or constant registers");
      break;
    case Opcode::AddV:
      if (!is_vector_reg(i.dst) && i.dst != kRegDmb) fail("dst must be a vector register or DMB");
      if (!vec_src(i.srcA)) fail("srcA must be a vector or constant register");
      if (i.flags & kFlagFold) {
        if (i.srcB != 0) fail("fold form takes no srcB");
      } else if (!vec_src(i.srcB)) {
        fail("srcB must be a vector or constant register");
      }
      break;
    case Opcode::AppV:
      if (!is_vector_reg(i.dst) && i.dst != kRegDmb) fail("dst must be a vector register or DMB");
      if (!vec_src(i.srcA)) fail("srcA must be a vector or constant register");
      if (i.srcB != 0) fail("srcB must be zero");
      if ((i.flags & kFlagRawApp) && (i.flags & kFlagExp2)) fail("raw and exp2 are exclusive");
      break;
    case Opcode::StoreM:
      if (i.srcA != kRegDmb) fail("srcA must be DMB");
      break;
    case Opcode::StoreV:
      if (!is_vector_reg(i.srcA) && i.srcA != kRegDmb) fail("srcA must be a vector register or DMB");
      break;
    case Opcode::Halt:
      if (i.dst || i.srcA || i.srcB || i.len || i.addr || i.flags) fail("operands must be zero");
      break;
  }
}

uint64_t encode(const Instruction& i) {
  validate(i);
  return (static_cast<uint64_t>(i.opcode) << 56) | (static_cast<uint64_t>(i.dst) << 48) |
         (static_cast<uint64_t>(i.srcA) << 40) | (static_cast<uint64_t>(i.srcB) << 32) |
         (static_cast<uint64_t>(i.len) << 16) | (static_cast<uint64_t>(i.addr & 0xFFF) << 4) |
         (i.flags & 0xF);
}

Instruction decode(uint64_t word) {
  uint8_t raw_op = static_cast<uint8_t>(word >> 56);
  if (!opcode_valid(raw_op)) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "decode: unknown opcode 0x%02X", raw_op);
    throw std::invalid_argument(buf);
  }
  Instruction i;
  i.opcode = static_cast<Opcode>(raw_op);
  i.dst = static_cast<uint8_t>(word >> 48);
  i.srcA = static_cast<uint8_t>(word >> 40);
  i.srcB = static_cast<uint8_t>(word >> 32);
  i.len = static_cast<uint16_t>(word >> 16);
  i.addr = static_cast<uint16_t>((word >> 4) & 0xFFF);
  i.flags = static_cast<uint8_t>(word & 0xF);
  return i;
}

namespace {

std::string hex_addr(uint16_t addr) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%03XH", addr);
  return buf;
}

std::string hex_payload(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08XH", v);
  return buf;
}

// Parses decimal, 0x.. hex, or trailing-H hex (the paper-style 0100H form).
bool parse_number(const std::string& tok, uint32_t& out) {
  if (tok.empty()) return false;
  std::string t = tok;
  int base = 10;
  if (t.size() > 2 && (t[0] == '0') && (t[1] == 'x' || t[1] == 'X')) {
    t = t.substr(2);
    base = 16;
  } else if (t.back() == 'H' || t.back() == 'h') {
    t = t.substr(0, t.size() - 1);
    base = 16;
  }
  if (t.empty()) return false;
  uint64_t v = 0;
  for (char c : t) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (base == 16 && c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (base == 16 && c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else return false;
    v = v * static_cast<uint64_t>(base) + static_cast<uint64_t>(d);
    if (v > 0xFFFFFFFFull) return false;
  }
  out = static_cast<uint32_t>(v);
  return true;
}

struct FlagTok {
  const char* name;
  uint8_t bits;
};

// Flag spellings accepted/emitted per opcode.
const FlagTok kStoreFlags[] = {{"T", kFlagTranspose}, {"Q0", 0 << kQuantModeShift},
                               {"Q1", 1 << kQuantModeShift}, {"Q2", 2 << kQuantModeShift},
                               {"Q3", 3 << kQuantModeShift}};

struct Field {
  std::string text;
  size_t column;  // 1-based character position
};

std::vector<Field> split_fields(const std::string& line) {
  std::vector<Field> out;
  Field cur{"", 0};
  for (size_t k = 0; k < line.size(); ++k) {
    char c = line[k];
    if (c == ',') {
      out.push_back(cur);
      cur = {"", 0};
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      if (cur.text.empty()) cur.column = k + 1;
      cur.text.push_back(c);
    }
  }
  if (!cur.text.empty() || !out.empty()) out.push_back(cur);
  return out;
}

}  // namespace

std::string disassemble_one(const Instruction& i) {
  std::string s = mnemonic(i.opcode);
  auto add = [&](const std::string& f) { s += "," + f; };
  switch (i.opcode) {
    case Opcode::Config:
      add(std::to_string(i.dst));
      add(hex_payload(i.config_payload()));
      break;
    case Opcode::LoadM:
      add(reg_name(i.dst));
      add(hex_addr(i.addr));
      add(std::to_string(i.len));
      break;
    case Opcode::LoadV:
      add(reg_name(i.dst));
      add(hex_addr(i.addr));
      add(std::to_string(i.len));
      if (i.flags & kFlagBroadcast) add("BCAST");
      break;
    case Opcode::MatMul:
      add(reg_name(i.srcA));
      add(reg_name(i.srcB));
      add(std::to_string(i.len));
      break;
    case Opcode::MulV:
      add(reg_name(i.dst));
      add(reg_name(i.srcA));
      add(reg_name(i.srcB));
      add(std::to_string(i.len));
      break;
    case Opcode::AddV: {
      add(reg_name(i.dst));
      add(reg_name(i.srcA));
      if (!(i.flags & kFlagFold)) add(reg_name(i.srcB));
      add(std::to_string(i.len));
      auto fn = static_cast<LaneFn>((i.flags & kQuantModeMask) >> kQuantModeShift);
      if (fn == LaneFn::Max) add("MAX");
      if (fn == LaneFn::Min) add("MIN");
      if (i.flags & kFlagFold) add("FOLD");
      break;
    }
    case Opcode::AppV:
      add(reg_name(i.dst));
      add(reg_name(i.srcA));
      add(std::to_string(i.len));
      if (i.flags & kFlagRawApp) add("RAW");
      if (i.flags & kFlagExp2) add("EXP2");
      break;
    case Opcode::StoreM:
    case Opcode::StoreV: {
      add(reg_name(i.srcA));
      add(hex_addr(i.addr));
      add(std::to_string(i.len));
      add(std::string("Q") + std::to_string((i.flags & kQuantModeMask) >> kQuantModeShift));
      if (i.flags & kFlagTranspose) add("T");
      break;
    }
    case Opcode::Halt:
      break;
  }
  return s;
}

std::string disassemble(const std::vector<uint64_t>& words) {
  std::string out;
  for (uint64_t w : words) {
    out += disassemble_one(decode(w));
    out += '\n';
  }
  return out;
}

std::vector<uint64_t> assemble(const std::string& text) {
  std::vector<uint64_t> words;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto semi = line.find(';');
    if (semi != std::string::npos) line = line.substr(0, semi);
    auto fields = split_fields(line);
    if (fields.empty()) continue;
    size_t err_col = fields[0].column;
    auto err = [&](const std::string& why) {
      throw ParseError("line " + std::to_string(lineno) + ", column " + std::to_string(err_col) +
                       ": " + why);
    };
    const std::string& m = fields[0].text;
    Instruction i;
    size_t pos = 1;
    auto need = [&](const char* what) -> const std::string& {
      if (pos >= fields.size()) err(std::string("missing operand: ") + what);
      err_col = fields[pos].column;
      return fields[pos++].text;
    };
    auto reg = [&](const char* what) {
      const std::string& tok = need(what);
      uint8_t r;
      if (!reg_from_name(tok, r)) err("undefined register name '" + tok + "'");
      return r;
    };
    auto num = [&](const char* what) {
      const std::string& tok = need(what);
      uint32_t v;
      if (!parse_number(tok, v)) err("bad number '" + tok + "'");
      return v;
    };
    auto remaining_flags = [&](std::initializer_list<FlagTok> extra) {
      while (pos < fields.size()) {
        err_col = fields[pos].column;
        const std::string& tok = fields[pos++].text;
        bool hit = false;
        for (const auto& f : extra) {
          if (tok == f.name) {
            i.flags |= f.bits;
            hit = true;
            break;
          }
        }
        if (!hit) err("unknown flag '" + tok + "'");
      }
    };
    auto addr12 = [&](uint32_t v) {
      if (v > 0xFFF) err("address exceeds 12 bits");
      return static_cast<uint16_t>(v);
    };
    auto len16 = [&](uint32_t v) {
      if (v > 0xFFFF) err("length exceeds 16 bits");
      return static_cast<uint16_t>(v);
    };

    if (m == "CONFIG") {
      uint32_t id = num("id");
      if (id > 0xFF) err("config id exceeds 8 bits");
      i = Instruction::config(static_cast<uint8_t>(id), num("payload"));
    } else if (m == "LOAD.M") {
      i.opcode = Opcode::LoadM;
      i.dst = reg("dst");
      i.addr = addr12(num("addr"));
      i.len = len16(num("len"));
    } else if (m == "LOAD.V") {
      i.opcode = Opcode::LoadV;
      i.dst = reg("dst");
      i.addr = addr12(num("addr"));
      i.len = len16(num("len"));
      remaining_flags({{"BCAST", kFlagBroadcast}});
    } else if (m == "MATMUL") {
      i.opcode = Opcode::MatMul;
      i.dst = kRegDmb;
      i.srcA = reg("srcA");
      i.srcB = reg("srcB");
      i.len = len16(num("len"));
    } else if (m == "MUL.V") {
      i.opcode = Opcode::MulV;
      i.dst = reg("dst");
      i.srcA = reg("srcA");
      i.srcB = reg("srcB");
      i.len = len16(num("len"));
    } else if (m == "ADD.V") {
      i.opcode = Opcode::AddV;
      i.dst = reg("dst");
      i.srcA = reg("srcA");
      // FOLD form has no srcB; detect by trying a register name.
      uint8_t r;
      if (pos < fields.size() && reg_from_name(fields[pos].text, r)) {
        i.srcB = r;
        ++pos;
      }
      i.len = len16(num("len"));
      remaining_flags({{"MAX", static_cast<uint8_t>(1 << kQuantModeShift)},
                       {"MIN", static_cast<uint8_t>(2 << kQuantModeShift)},
                       {"FOLD", kFlagFold}});
      if (!(i.flags & kFlagFold) && !is_vector_reg(i.srcB) && !is_const_reg(i.srcB))
        err("ADD.V requires srcB unless FOLD");
    } else if (m == "APP.V") {
      i.opcode = Opcode::AppV;
      i.dst = reg("dst");
      i.srcA = reg("srcA");
      i.len = len16(num("len"));
      remaining_flags({{"RAW", kFlagRawApp}, {"EXP2", kFlagExp2}});
    } else if (m == "STORE.M" || m == "STORE.V") {
      i.opcode = m == "STORE.M" ? Opcode::StoreM : Opcode::StoreV;
      i.srcA = reg("src");
      i.addr = addr12(num("addr"));
      i.len = len16(num("len"));
      remaining_flags({kStoreFlags[0], kStoreFlags[1], kStoreFlags[2], kStoreFlags[3],
                       kStoreFlags[4]});
    } else if (m == "HALT") {
      i.opcode = Opcode::Halt;
    } else {
      err("unknown mnemonic '" + m + "'");
    }
    try {
      words.push_back(encode(i));
    } catch (const std::invalid_argument& e) {
      err(e.what());
    }
  }
  return words;
}

std::vector<uint8_t> serialize_program(const std::vector<uint64_t>& words) {
  std::vector<uint8_t> out;
  out.reserve(9 + words.size() * 8);
  out.push_back('T');
  out.push_back('A');
  out.push_back('T');
  out.push_back('A');
  out.push_back(kProgramVersion);
  uint32_t n = static_cast<uint32_t>(words.size());
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<uint8_t>(n >> (8 * b)));
  for (uint64_t w : words)
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<uint8_t>(w >> (8 * b)));
  return out;
}

std::vector<uint64_t> deserialize_program(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 9 || bytes[0] != 'T' || bytes[1] != 'A' || bytes[2] != 'T' || bytes[3] != 'A')
    throw ParseError("program file: bad magic");
  if (bytes[4] != kProgramVersion) throw ParseError("program file: unsupported version");
  uint32_t n = 0;
  for (int b = 0; b < 4; ++b) n |= static_cast<uint32_t>(bytes[5 + b]) << (8 * b);
  if (bytes.size() != 9 + static_cast<size_t>(n) * 8) throw ParseError("program file: truncated");
  std::vector<uint64_t> words(n);
  for (uint32_t k = 0; k < n; ++k) {
    uint64_t w = 0;
    for (int b = 0; b < 8; ++b) w |= static_cast<uint64_t>(bytes[9 + k * 8 + static_cast<uint32_t>(b)]) << (8 * b);
    words[k] = w;
  }
  return words;
}

void write_program(const std::string& path, const std::vector<uint64_t>& words) {
  auto bytes = serialize_program(words);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RunError("cannot write " + path);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<uint64_t> read_program(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot read " + path);
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_program(bytes);
}

}  // namespace tataa::isa
