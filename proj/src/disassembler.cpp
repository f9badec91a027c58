#include <cstdio>
#include <sstream>
#include <string>

#include "minipc/assembler.hpp"
#include "minipc/isa.hpp"

namespace minipc {

namespace {

std::string hex(uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%x", v);
  return buf;
}

std::string word_literal(uint32_t word) {
  char buf[24];
  std::snprintf(buf, sizeof buf, ".word 0x%08x", word);
  return buf;
}

std::string reg(unsigned r) { return "r" + std::to_string(r); }

}  // namespace

std::string disassemble(uint32_t addr, uint32_t word) {
  const auto decoded = decode(word);
  if (!decoded) return word_literal(word);
  const Instruction& in = *decoded;
  const std::string m(mnemonic(in.op));
  const auto uimm = static_cast<uint16_t>(in.imm);

  // Canonical form = the operand fields the syntax can express; anything
  // else set means the word has no canonical spelling.
  Instruction canon{in.op, 0, 0, 0};
  std::string text;
  switch (in.op) {
    case Opcode::Nop: case Opcode::Halt: case Opcode::Ret: case Opcode::Iret:
    case Opcode::Brk: case Opcode::Sti: case Opcode::Cli: case Opcode::Idle:
      text = m;
      break;
    case Opcode::Movi:
      canon.rd = in.rd;
      canon.imm = in.imm;
      text = m + " " + reg(in.rd) + ", " + std::to_string(in.imm);
      break;
    case Opcode::Mov: case Opcode::Add: case Opcode::Sub: case Opcode::And:
    case Opcode::Or: case Opcode::Xor: case Opcode::Shl: case Opcode::Shr:
    case Opcode::Cmp:
      canon.rd = in.rd;
      canon.rs = in.rs;
      text = m + " " + reg(in.rd) + ", " + reg(in.rs);
      break;
    case Opcode::Jmp: case Opcode::Jz: case Opcode::Jnz: case Opcode::Jlt:
      canon.imm = in.imm;
      text = m + " " + std::to_string(in.imm) + " ; -> " +
             hex(addr + 4 + static_cast<uint32_t>(int32_t{in.imm} * 4));
      break;
    case Opcode::Call:
      canon.imm = in.imm;
      text = m + " " + hex(uimm) + " ; -> " + hex(uint32_t{uimm} * 4);
      break;
    case Opcode::Load: case Opcode::Store: {
      canon.rd = in.rd;
      canon.rs = in.rs;
      canon.imm = in.imm;
      std::string mem = "[" + reg(in.rs);
      if (in.imm > 0) mem += "+" + std::to_string(in.imm);
      if (in.imm < 0) mem += std::to_string(in.imm);
      text = m + " " + reg(in.rd) + ", " + mem + "]";
      break;
    }
    case Opcode::Push: case Opcode::Pop: case Opcode::Livt:
      canon.rd = in.rd;
      text = m + " " + reg(in.rd);
      break;
    case Opcode::In:
      canon.rd = in.rd;
      canon.imm = in.imm;
      text = m + " " + reg(in.rd) + ", " + hex(uimm);
      break;
    case Opcode::Out:
      canon.rd = in.rd;
      canon.imm = in.imm;
      text = m + " " + hex(uimm) + ", " + reg(in.rd);
      break;
    case Opcode::Syscall:
      canon.imm = in.imm;
      text = m + " " + std::to_string(in.imm);
      break;
    case Opcode::Settf:
      if (in.imm == 0 || in.imm == 1) canon.imm = in.imm;
      text = m + " " + std::to_string(in.imm);
      break;
    case Opcode::Lptbr:
      canon.rd = in.rd;
      if (in.imm >= 0 && in.imm <= 3) canon.imm = in.imm;
      text = m + " " + reg(in.rd);
      if (in.imm != 0) text += ", " + std::to_string(in.imm);
      break;
  }
  if (!(canon == in)) return word_literal(word);
  return text;
}

std::string disassemble_image(const Image& image) {
  std::ostringstream os;
  char buf[48];
  std::snprintf(buf, sizeof buf, "; entry 0x%08x\n", image.entry);
  os << buf;
  for (const auto& s : image.sections) {
    std::snprintf(buf, sizeof buf, ".org 0x%x\n", s.load_paddr);
    os << buf;
    for (size_t off = 0; off + 4 <= s.bytes.size(); off += 4) {
      const uint32_t addr = s.load_paddr + static_cast<uint32_t>(off);
      const uint32_t w = uint32_t{s.bytes[off]} | uint32_t{s.bytes[off + 1]} << 8 |
                         uint32_t{s.bytes[off + 2]} << 16 | uint32_t{s.bytes[off + 3]} << 24;
      if (addr == image.entry) os << "start:\n";
      std::string text = "    " + disassemble(addr, w);
      if (text.size() < 40) text.resize(40, ' ');
      std::snprintf(buf, sizeof buf, " ; %08x: %08x\n", addr, w);
      os << text << buf;
    }
  }
  return os.str();
}

}  // namespace minipc
