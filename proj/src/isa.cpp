#include "minipc/isa.hpp"

#include <array>
#include <string>

namespace minipc {

namespace {

constexpr std::array<std::string_view, kOpcodeCount> kMnemonics = {
    "nop",  "halt",  "movi",  "mov",     "add",  "sub",  "and",   "or",
    "xor",  "shl",   "shr",   "cmp",     "jmp",  "jz",   "jnz",   "jlt",
    "load", "store", "push",  "pop",     "call", "ret",  "in",    "out",
    "syscall", "iret", "brk", "lptbr",   "livt", "sti",  "cli",   "settf",
    "idle",
};

}  // namespace

std::optional<Instruction> decode(uint32_t word) {
  const uint32_t op = word >> 26;
  if (op >= kOpcodeCount || (word & 0x000F0000u) != 0) return std::nullopt;
  Instruction insn;
  insn.op = static_cast<Opcode>(op);
  insn.rd = static_cast<uint8_t>((word >> 23) & 7u);
  insn.rs = static_cast<uint8_t>((word >> 20) & 7u);
  insn.imm = static_cast<int16_t>(word & 0xFFFFu);
  return insn;
}

uint32_t encode(const Instruction& insn) {
  if (static_cast<unsigned>(insn.op) >= kOpcodeCount) {
    throw EncodingError("undefined opcode " +
                        std::to_string(static_cast<unsigned>(insn.op)));
  }
  if (insn.rd >= kRegisterCount || insn.rs >= kRegisterCount) {
    throw EncodingError("register index out of range");
  }
  return (static_cast<uint32_t>(insn.op) << 26) |
         (static_cast<uint32_t>(insn.rd) << 23) |
         (static_cast<uint32_t>(insn.rs) << 20) |
         static_cast<uint16_t>(insn.imm);
}

uint32_t encode(Opcode op, unsigned rd, unsigned rs, int imm) {
  if (rd >= kRegisterCount || rs >= kRegisterCount) {
    throw EncodingError("register index out of range");
  }
  if (imm < INT16_MIN || imm > INT16_MAX) {
    throw EncodingError("imm16 out of range: " + std::to_string(imm));
  }
  return encode(Instruction{op, static_cast<uint8_t>(rd),
                            static_cast<uint8_t>(rs),
                            static_cast<int16_t>(imm)});
}

bool is_privileged(Opcode op) {
  switch (op) {
    case Opcode::Halt:
    case Opcode::In:
    case Opcode::Out:
    case Opcode::Iret:
    case Opcode::Lptbr:
    case Opcode::Livt:
    case Opcode::Sti:
    case Opcode::Cli:
    case Opcode::Settf:
    case Opcode::Idle:
      return true;
    default:
      return false;
  }
}

std::string_view mnemonic(Opcode op) {
  return kMnemonics.at(static_cast<size_t>(op));
}

std::optional<Opcode> opcode_from_mnemonic(std::string_view name) {
  for (size_t i = 0; i < kMnemonics.size(); ++i) {
    if (kMnemonics[i] == name) return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

}  // namespace minipc
