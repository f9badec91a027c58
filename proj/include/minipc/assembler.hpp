#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "minipc/image.hpp"

namespace minipc {

struct AsmError {
  int line = 0;
  std::string message;
};

/// All diagnostics from one assemble() call.
class AsmErrors : public std::runtime_error {
 public:
  explicit AsmErrors(std::vector<AsmError> errors);
  const std::vector<AsmError>& errors() const { return errors_; }

 private:
  std::vector<AsmError> errors_;
};

/// Two-pass assembler for `.masm` text.
///
/// Grammar, one statement per line:
///   [label:] [.org N | .word V | .ascii "s" | .equ NAME, V | mnemonic operands] [; comment]
///
/// `.org` opens a new section. `.ascii` pads with zeros to the next word.
/// Branch operands (jmp/jz/jnz/jlt) given as labels become word offsets
/// relative to the following instruction; `call` labels become absolute word
/// addresses. Numeric branch/call operands are taken as the raw imm16.
/// The entry point is the label `start` if defined, else the first section.
Image assemble(std::string_view source);

/// One canonical line for `word` located at `addr`. Words that are not the
/// canonical encoding of an instruction come out as `.word 0x...`.
std::string disassemble(uint32_t addr, uint32_t word);

/// Listing of every section that assembles back to the same bytes: one
/// instruction per line with `; addr: word` alongside, and a `start:` label
/// at the entry point.
std::string disassemble_image(const Image& image);

}  // namespace minipc
