#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "minipc/assembler.hpp"
#include "minipc/image.hpp"
#include "minipc/isa.hpp"
#include "minipc/workload.hpp"

using namespace minipc;

namespace {

// Field layout written out independently of the library encoder.
uint32_t pack(unsigned op, unsigned rd, unsigned rs, int imm) {
  return uint32_t{op} << 26 | uint32_t{rd} << 23 | uint32_t{rs} << 20 |
         (static_cast<uint32_t>(imm) & 0xFFFFu);
}

uint32_t word_at(const Image& img, uint32_t addr) {
  for (const auto& s : img.sections) {
    if (addr >= s.load_paddr && addr + 4 <= s.load_paddr + s.bytes.size()) {
      const uint8_t* b = s.bytes.data() + (addr - s.load_paddr);
      return uint32_t{b[0]} | uint32_t{b[1]} << 8 | uint32_t{b[2]} << 16 | uint32_t{b[3]} << 24;
    }
  }
  FAIL("address not in image");
  return 0;
}

std::vector<AsmError> errors_of(std::string_view src) {
  try {
    assemble(src);
  } catch (const AsmErrors& e) {
    return e.errors();
  }
  return {};
}

}  // namespace

TEST_CASE("encode matches the documented field layout") {
  CHECK(encode(Opcode::Movi, 3, 0, -1) == pack(2, 3, 0, -1));
  CHECK(encode(Opcode::Store, 1, 6, 0x100) == pack(17, 1, 6, 0x100));
  CHECK(encode(Opcode::Idle) == pack(32, 0, 0, 0));
  CHECK(kBrkWord == pack(26, 0, 0, 0));
}

TEST_CASE("decode inverts encode over every opcode") {
  std::mt19937 rng(7);
  for (unsigned op = 0; op < kOpcodeCount; ++op) {
    for (int k = 0; k < 200; ++k) {
      Instruction in{static_cast<Opcode>(op), static_cast<uint8_t>(rng() % 8),
                     static_cast<uint8_t>(rng() % 8), static_cast<int16_t>(rng() & 0xFFFF)};
      const uint32_t w = encode(in);
      CHECK(w == pack(op, in.rd, in.rs, in.imm));
      const auto back = decode(w);
      REQUIRE(back);
      CHECK(*back == in);
    }
  }
}

TEST_CASE("undefined opcodes and reserved bits do not decode") {
  for (unsigned op = kOpcodeCount; op < 64; ++op) CHECK_FALSE(decode(pack(op, 0, 0, 0)));
  for (unsigned bit = 16; bit < 20; ++bit) CHECK_FALSE(decode(pack(2, 1, 0, 5) | 1u << bit));
}

TEST_CASE("encode rejects fields that do not fit") {
  CHECK_THROWS_AS(encode(Opcode::Mov, 8, 0, 0), EncodingError);
  CHECK_THROWS_AS(encode(Opcode::Movi, 0, 0, 70000), EncodingError);
}

TEST_CASE("mnemonics round-trip") {
  for (unsigned op = 0; op < kOpcodeCount; ++op) {
    const auto o = static_cast<Opcode>(op);
    CHECK(opcode_from_mnemonic(mnemonic(o)) == o);
  }
  CHECK_FALSE(opcode_from_mnemonic("bogus"));
}

TEST_CASE("assemble inverts disassemble for every decodable word") {
  std::mt19937 rng(11);
  const uint32_t base = 0x20000;
  size_t canonical = 0;
  for (unsigned op = 0; op < kOpcodeCount; ++op) {
    for (int k = 0; k < 300; ++k) {
      const uint32_t w = pack(op, rng() % 8, rng() % 8, static_cast<int>(rng() & 0xFFFF));
      const std::string text = disassemble(base, w);
      const Image img = assemble(".org 0x20000\n" + text + "\n");
      CHECK_MESSAGE(word_at(img, base) == w, text);
      if (text.rfind(".word", 0) != 0) {
        ++canonical;
        CHECK(disassemble(base, word_at(img, base)) == text);
      }
    }
  }
  CHECK(canonical > 0);
}

TEST_CASE("every opcode has a canonical spelling") {
  for (unsigned op = 0; op < kOpcodeCount; ++op) {
    const std::string text = disassemble(0x1000, pack(op, 0, 0, 0));
    CHECK_MESSAGE(text.rfind(".word", 0) != 0, "opcode " << op);
  }
}

TEST_CASE("labels, branches and calls") {
  const Image img = assemble(
      "start:\n"
      "  jmp fwd\n"
      "  nop\n"
      "fwd: call sub\n"
      "  jnz start\n"
      ".org 0x400\n"
      "sub: ret\n");
  CHECK(img.entry == 0);
  CHECK(word_at(img, 0) == pack(12, 0, 0, 1));          // skips one word
  CHECK(word_at(img, 8) == pack(20, 0, 0, 0x400 / 4));  // absolute word address
  CHECK(word_at(img, 12) == pack(14, 0, 0, -4));
  CHECK(sections_disjoint(img));
}

TEST_CASE("directives") {
  const Image img = assemble(
      ".equ BASE, 0x0F00\n"
      ".org 0x100\n"
      "  .word 0xDEADBEEF\n"
      "  .ascii \"hi\"\n"
      "  movi r1, BASE\n");
  CHECK(word_at(img, 0x100) == 0xDEADBEEF);
  CHECK(word_at(img, 0x104) == 0x6968);
  CHECK(word_at(img, 0x108) == pack(2, 1, 0, 0x0F00));
}

TEST_CASE("assembler errors carry line numbers") {
  SUBCASE("duplicate label") {
    const auto e = errors_of("a: nop\nnop\na: halt\n");
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 3);
  }
  SUBCASE("immediate out of range") {
    const auto e = errors_of("nop\n\nmovi r1, 70000\n");
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 3);
  }
  SUBCASE("branch out of range") {
    const auto e = errors_of("jmp far\n.org 0x80000\nfar: nop\n");
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 1);
  }
  SUBCASE("several errors are all reported") {
    const auto e = errors_of("bogus r1\nmovi r9, 1\nmov r1\n");
    REQUIRE(e.size() == 3);
    CHECK(e[0].line == 1);
    CHECK(e[1].line == 2);
    CHECK(e[2].line == 3);
  }
  SUBCASE("undefined label") {
    const auto e = errors_of("nop\njz nowhere\n");
    REQUIRE(e.size() == 1);
    CHECK(e[0].line == 2);
  }
  SUBCASE("overlapping sections") {
    const auto e = errors_of(".org 0x100\nnop\nnop\n.org 0x104\nnop\n");
    REQUIRE_FALSE(e.empty());
  }
}

TEST_CASE("MPC1 serialization is bit-exact") {
  Image img;
  img.entry = 0x100;
  img.sections.push_back({0x100, {1, 2, 3, 4, 5, 6, 7, 8}});
  const std::vector<uint8_t> expect = {'M', 'P', 'C', '1', 0x00, 0x01, 0, 0, 1, 0, 0, 0,
                                       0x00, 0x01, 0, 0, 8, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8};
  CHECK(serialize_image(img) == expect);
  CHECK(parse_image(expect) == img);
}

TEST_CASE("MPC1 parser rejects damaged input") {
  Image img;
  img.entry = 4;
  img.sections.push_back({0, {9, 9, 9, 9}});
  auto bytes = serialize_image(img);
  SUBCASE("bad magic") {
    bytes[0] = 'X';
    CHECK_THROWS_AS(parse_image(bytes), ImageFormatError);
  }
  SUBCASE("truncated") {
    for (size_t n = 0; n < bytes.size(); ++n) {
      CHECK_THROWS_AS(parse_image(std::span(bytes).first(n)), ImageFormatError);
    }
  }
  SUBCASE("trailing bytes") {
    bytes.push_back(0);
    CHECK_THROWS_AS(parse_image(bytes), ImageFormatError);
  }
}

TEST_CASE("image round-trip over random images") {
  std::mt19937 rng(3);
  for (int k = 0; k < 100; ++k) {
    Image img;
    img.entry = static_cast<uint32_t>(rng());
    const unsigned n = rng() % 4;
    for (unsigned i = 0; i < n; ++i) {
      Section s{static_cast<uint32_t>(rng()), std::vector<uint8_t>(rng() % 64)};
      for (auto& b : s.bytes) b = static_cast<uint8_t>(rng());
      img.sections.push_back(std::move(s));
    }
    CHECK(parse_image(serialize_image(img)) == img);
  }
}

TEST_CASE("sections_disjoint") {
  Image img;
  img.sections.push_back({0x100, std::vector<uint8_t>(8)});
  img.sections.push_back({0x108, std::vector<uint8_t>(8)});
  CHECK(sections_disjoint(img));
  img.sections.push_back({0x10F, std::vector<uint8_t>(1)});
  CHECK_FALSE(sections_disjoint(img));
}

TEST_CASE("shipped guest programs assemble and disassemble losslessly") {
  for (const Image* img : {&workload::kernel_image(), &workload::xfer_image(), &workload::crash_image()}) {
    CHECK(sections_disjoint(*img));
    const Image again = assemble(disassemble_image(*img));
    CHECK(again == *img);
  }
}
