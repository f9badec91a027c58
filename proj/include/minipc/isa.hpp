#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string_view>

namespace minipc {

// MiniPC-32 instruction word layout:
//   [31:26] opcode  [25:23] rd  [22:20] rs  [19:16] reserved (zero)  [15:0] imm16
enum class Opcode : uint8_t {
  Nop = 0,
  Halt,
  Movi,
  Mov,
  Add,
  Sub,
  And,
  Or,
  Xor,
  Shl,
  Shr,
  Cmp,
  Jmp,
  Jz,
  Jnz,
  Jlt,
  Load,
  Store,
  Push,
  Pop,
  Call,
  Ret,
  In,
  Out,
  Syscall,
  Iret,
  Brk,
  Lptbr,
  Livt,
  Sti,
  Cli,
  Settf,
  Idle,
};

inline constexpr unsigned kOpcodeCount = 33;
inline constexpr unsigned kRegisterCount = 8;
inline constexpr unsigned kStackRegister = 7;
// Page-fault delivery clobbers this register with the faulting vaddr.
inline constexpr unsigned kFaultAddrRegister = 6;

// Trap vectors.
namespace vec {
inline constexpr unsigned kIllegal = 0;
inline constexpr unsigned kPageFault = 1;
inline constexpr unsigned kAlignment = 2;
inline constexpr unsigned kBreakpoint = 3;
inline constexpr unsigned kSyscall = 4;
inline constexpr unsigned kPrivilege = 5;
inline constexpr unsigned kDebugStep = 6;
inline constexpr unsigned kTimer = 8;
inline constexpr unsigned kDisk = 9;
inline constexpr unsigned kNic = 10;
inline constexpr unsigned kUart = 11;
}  // namespace vec

// Selectors for `lptbr rd, sel`.
enum class ControlReg : uint8_t { Ptbr = 0, Epc = 1, Eflags = 2, Emode = 3 };

struct Instruction {
  Opcode op = Opcode::Nop;
  uint8_t rd = 0;
  uint8_t rs = 0;
  int16_t imm = 0;

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

class EncodingError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Returns std::nullopt for an undefined opcode or nonzero reserved bits;
/// the CPU turns that into an illegal-instruction trap.
std::optional<Instruction> decode(uint32_t word);

/// Throws EncodingError when a field does not fit.
uint32_t encode(const Instruction& insn);
uint32_t encode(Opcode op, unsigned rd = 0, unsigned rs = 0, int imm = 0);

bool is_privileged(Opcode op);
std::string_view mnemonic(Opcode op);
std::optional<Opcode> opcode_from_mnemonic(std::string_view name);

inline constexpr uint32_t kBrkWord = static_cast<uint32_t>(Opcode::Brk) << 26;

}  // namespace minipc
