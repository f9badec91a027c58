#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <random>
#include <sstream>

#include "minipc/assembler.hpp"
#include "minipc/machine.hpp"

using namespace minipc;

namespace {

struct Fixture {
  Machine m;
  explicit Fixture(std::string_view src) { m.load_image(assemble(src)); }
  ExitReason run(uint64_t budget = 1'000'000) { return m.run(budget); }
};

template <typename T>
bool is(const ExitReason& e) {
  return std::holds_alternative<T>(e);
}

// Straight-line ALU reference, written from the instruction definitions.
struct RefCpu {
  std::array<uint32_t, 8> r{};
  uint32_t flags = 0;
  void zn(uint32_t v) {
    flags &= ~(flag::kZ | flag::kN);
    if (v == 0) flags |= flag::kZ;
    if (v >> 31) flags |= flag::kN;
  }
  void exec(Opcode op, unsigned d, unsigned s, int imm) {
    switch (op) {
      case Opcode::Movi: r[d] = static_cast<uint32_t>(imm); break;
      case Opcode::Mov: r[d] = r[s]; break;
      case Opcode::Add: zn(r[d] += r[s]); break;
      case Opcode::Sub: zn(r[d] -= r[s]); break;
      case Opcode::And: zn(r[d] &= r[s]); break;
      case Opcode::Or: zn(r[d] |= r[s]); break;
      case Opcode::Xor: zn(r[d] ^= r[s]); break;
      case Opcode::Shl: zn(r[d] <<= (r[s] & 31)); break;
      case Opcode::Shr: zn(r[d] >>= (r[s] & 31)); break;
      case Opcode::Cmp:
        flags &= ~(flag::kZ | flag::kN);
        if (r[d] == r[s]) flags |= flag::kZ;
        if (static_cast<int32_t>(r[d]) < static_cast<int32_t>(r[s])) flags |= flag::kN;
        break;
      default: break;
    }
  }
};

// Kernel preamble: IVT at 0x800 whose every slot points to a handler that
// records the vector in r5 and halts.
std::string with_ivt(std::string_view body) {
  std::ostringstream os;
  os << ".org 0x800\n";
  for (int v = 0; v < 16; ++v) os << "  .word " << 0x900 + 8 * v << "\n";
  os << ".org 0x900\n";
  for (int v = 0; v < 16; ++v) os << "  movi r5, " << v << "\n  halt\n";
  os << ".org 0x1000\nstart:\n  movi r0, 0x800\n  livt r0\n  movi r5, -1\n" << body;
  return os.str();
}

// Identity-map the first 64 pages with the table at 0x4000; page 5 is
// supervisor-only, page 6 read-only user, the rest user read/write.
std::string paging_setup() {
  return
      "  movi r0, 0x4000\n"
      "  movi r1, 0\n"
      "  movi r2, 7\n"
      "  movi r3, 64\n"
      "  movi r4, 1\n"
      "pt_loop:\n"
      "  mov r6, r1\n"
      "  or r6, r2\n"
      "  store r6, [r0+0]\n"
      "  movi r6, 4\n"
      "  add r0, r6\n"
      "  movi r6, 0x1000\n"
      "  add r1, r6\n"
      "  sub r3, r4\n"
      "  jnz pt_loop\n"
      "  movi r0, 0x4000\n"
      "  movi r1, 0x5003\n"
      "  store r1, [r0+0x14]\n"   // PTE 5: present, writable, supervisor
      "  movi r1, 0x6005\n"
      "  store r1, [r0+0x18]\n"   // PTE 6: present, user, read-only
      "  lptbr r0, 0\n";
}

}  // namespace

TEST_CASE("load_image places sections and resets entry state") {
  Machine m;
  Image img;
  img.entry = 0x100;
  img.sections.push_back({0x100, {1, 2, 3, 4, 5, 6, 7, 8}});
  m.regs().mode = CpuMode::User;
  m.regs().ptbr = 0x4000;
  m.load_image(img);
  CHECK(m.regs().pc == 0x100);
  CHECK(m.regs().mode == CpuMode::Supv);
  CHECK(m.regs().ptbr == 0);
  CHECK(m.read_phys32(0x104) == 0x08070605);
}

TEST_CASE("load_image with no sections only sets pc") {
  Machine m;
  Image img;
  img.entry = 0x40;
  m.load_image(img);
  CHECK(m.regs().pc == 0x40);
  CHECK(std::all_of(m.phys().begin(), m.phys().end(), [](uint8_t b) { return b == 0; }));
}

TEST_CASE("load_image refuses monitor frames and out-of-range sections") {
  Machine m;
  m.set_frame_owner(0x20, FrameOwner::Monitor);
  Image img;
  img.sections.push_back({0x20000 - 4, std::vector<uint8_t>(8, 0xAA)});
  CHECK_THROWS_AS(m.load_image(img), LoadError);
  CHECK(m.read_phys32(0x20000 - 4) == 0);  // nothing copied
  img.sections = {{m.mem_size() - 2, std::vector<uint8_t>(4)}};
  CHECK_THROWS_AS(m.load_image(img), LoadError);
}

TEST_CASE("ALU ops match the reference over random programs") {
  std::mt19937 rng(42);
  const Opcode ops[] = {Opcode::Movi, Opcode::Mov, Opcode::Add, Opcode::Sub, Opcode::And,
                        Opcode::Or,   Opcode::Xor, Opcode::Shl, Opcode::Shr, Opcode::Cmp};
  for (int prog = 0; prog < 200; ++prog) {
    RefCpu ref;
    Image img;
    img.entry = 0x1000;
    Section s{0x1000, {}};
    auto emit = [&](uint32_t w) {
      for (int i = 0; i < 4; ++i) s.bytes.push_back(static_cast<uint8_t>(w >> (8 * i)));
    };
    for (int k = 0; k < 60; ++k) {
      const Opcode op = ops[rng() % std::size(ops)];
      const unsigned d = rng() % 8, src = rng() % 8;
      const int imm = static_cast<int16_t>(rng() & 0xFFFF);
      emit(encode(op, d, op == Opcode::Movi ? 0 : src, op == Opcode::Movi ? imm : 0));
      ref.exec(op, d, src, imm);
    }
    emit(encode(Opcode::Halt));
    img.sections.push_back(std::move(s));
    Machine m;
    m.load_image(img);
    REQUIRE(is<exit::HaltInstr>(m.run(10'000)));
    CHECK(m.regs().r == ref.r);
    CHECK((m.regs().flags & (flag::kZ | flag::kN)) == ref.flags);
    CHECK(m.retired() == 60);
  }
}

TEST_CASE("branches, memory, stack, calls") {
  Fixture f(
      ".org 0x1000\n"
      "start:\n"
      "  movi r7, 0x3000\n"
      "  movi r1, 5\n"
      "  movi r2, 0\n"
      "  movi r3, 1\n"
      "loop:\n"
      "  add r2, r1\n"
      "  sub r1, r3\n"
      "  jnz loop\n"          // r2 = 15
      "  movi r4, 0x2000\n"
      "  store r2, [r4+8]\n"
      "  load r0, [r4+8]\n"
      "  push r0\n"
      "  call sub\n"
      "  pop r6\n"
      "  cmp r3, r2\n"
      "  jlt less\n"
      "  halt\n"
      "less:\n"
      "  movi r1, 99\n"
      "  halt\n"
      ".org 0x1800\n"
      "sub:\n"
      "  movi r5, 7\n"
      "  ret\n");
  REQUIRE(is<exit::HaltInstr>(f.run()));
  CHECK(f.m.regs().r[2] == 15);
  CHECK(f.m.read_phys32(0x2008) == 15);
  CHECK(f.m.regs().r[5] == 7);
  CHECK(f.m.regs().r[6] == 15);
  CHECK(f.m.regs().r[7] == 0x3000);
  CHECK(f.m.regs().r[1] == 99);
}

TEST_CASE("trap vectors for illegal, alignment, privilege, syscall, breakpoint") {
  SUBCASE("illegal") {
    Fixture f(with_ivt("  .word 0xFC000000\n"));
    CHECK(is<exit::HaltInstr>(f.run()));
    CHECK(f.m.regs().r[5] == vec::kIllegal);
  }
  SUBCASE("alignment") {
    Fixture f(with_ivt("  movi r1, 0x2002\n  load r2, [r1+0]\n"));
    CHECK(is<exit::HaltInstr>(f.run()));
    CHECK(f.m.regs().r[5] == vec::kAlignment);
  }
  SUBCASE("privileged instruction in user mode") {
    Fixture f(with_ivt(
        "  movi r1, user\n  lptbr r1, 1\n  movi r1, 0\n  lptbr r1, 2\n  lptbr r1, 3\n  iret\n"
        "user:\n  cli\n"));
    CHECK(is<exit::HaltInstr>(f.run()));
    CHECK(f.m.regs().r[5] == vec::kPrivilege);
  }
  SUBCASE("syscall") {
    Fixture f(with_ivt("  syscall 3\n"));
    CHECK(is<exit::HaltInstr>(f.run()));
    CHECK(f.m.regs().r[5] == vec::kSyscall);
    CHECK(f.m.regs().epc == 0x1000 + 4 * 4);  // after the syscall
  }
  SUBCASE("brk without interception traps to the guest") {
    Fixture f(with_ivt("  brk\n"));
    CHECK(is<exit::HaltInstr>(f.run()));
    CHECK(f.m.regs().r[5] == vec::kBreakpoint);
  }
  SUBCASE("brk with interception exits without retiring") {
    Fixture f(with_ivt("  brk\n"));
    f.m.intercept_debug = true;
    const auto e = f.run();
    REQUIRE(is<exit::DebugBreak>(e));
    CHECK(std::get<exit::DebugBreak>(e).pc == 0x100c);
    CHECK(f.m.regs().pc == 0x100c);
    CHECK(f.m.retired() == 3);
  }
}

TEST_CASE("user access to a supervisor page faults and touches nothing") {
  // Random probes into the supervisor-only page, reads and writes.
  std::mt19937 rng(5);
  for (int k = 0; k < 20; ++k) {
    const uint32_t off = (rng() % 1024) * 4;
    const bool write = rng() % 2;
    std::ostringstream body;
    body << paging_setup() << "  movi r1, 0x5000\n  movi r2, 0x5A5A\n  store r2, [r1+" << off
         << "]\n"  // supervisor write succeeds
         << "  movi r1, user\n  lptbr r1, 1\n  movi r1, 0\n  lptbr r1, 2\n  lptbr r1, 3\n  iret\n"
         << "user:\n  movi r1, 0x5000\n  movi r2, 0x77\n"
         << (write ? "  store r2, [r1+" : "  load r2, [r1+") << off << "]\n  halt\n";
    Fixture f(with_ivt(body.str()));
    const std::vector<uint8_t> before(f.m.phys().begin() + 0x5000, f.m.phys().begin() + 0x6000);
    REQUIRE(is<exit::HaltInstr>(f.run()));
    CHECK(f.m.regs().r[5] == vec::kPageFault);
    CHECK(f.m.regs().r[kFaultAddrRegister] == 0x5000 + off);
    CHECK(f.m.read_phys32(0x5000 + off) == 0x5A5A);
    if (!write) CHECK(f.m.regs().r[2] == 0x77);
    std::vector<uint8_t> after(f.m.phys().begin() + 0x5000, f.m.phys().begin() + 0x6000);
    after[off] = before[off];  // the supervisor store above is the only change
    after[off + 1] = before[off + 1];
    CHECK(after == before);
  }
}

TEST_CASE("user write to a read-only page faults") {
  Fixture f(with_ivt(paging_setup() +
                     "  movi r1, user\n  lptbr r1, 1\n  movi r1, 0\n  lptbr r1, 2\n  lptbr r1, 3\n"
                     "  iret\nuser:\n  movi r1, 0x6000\n  load r2, [r1+0]\n  store r2, [r1+0]\n"));
  REQUIRE(is<exit::HaltInstr>(f.run()));
  CHECK(f.m.regs().r[5] == vec::kPageFault);
  CHECK(f.m.regs().r[kFaultAddrRegister] == 0x6000);
}

TEST_CASE("guest code can never touch a monitor frame") {
  std::mt19937 rng(9);
  for (int k = 0; k < 50; ++k) {
    Machine m;
    const uint32_t frame = 0x20 + rng() % 8;
    for (uint32_t fr = 0x20; fr < 0x28; ++fr) m.set_frame_owner(fr, FrameOwner::Monitor);
    for (uint32_t a = 0x20000; a < 0x28000; a += 4) m.write_phys32(a, static_cast<uint32_t>(rng()));
    const std::vector<uint8_t> before(m.phys().begin(), m.phys().end());
    const uint32_t target = frame * kPageBytes + (rng() % 1024) * 4;
    const int kind = static_cast<int>(rng() % 4);
    std::ostringstream src;
    src << ".org 0x1000\nstart:\n  movi r1, " << (target >> 16) << "\n  movi r2, 16\n  shl r1, r2\n"
        << "  movi r2, " << (target & 0xFFFF) << "\n  or r1, r2\n  movi r7, 0x3000\n";
    if (kind == 0) src << "  store r2, [r1+0]\n";
    if (kind == 1) src << "  load r3, [r1+0]\n";
    if (kind == 2) src << "  mov r7, r1\n  movi r3, 4\n  add r7, r3\n  push r2\n";
    if (kind == 3) src << "  livt r1\n  syscall 0\n";  // vector fetch from a monitor frame
    src << "  halt\n";
    const Image img = assemble(src.str());
    m.load_image(img);
    std::vector<uint8_t> expect(m.phys().begin(), m.phys().end());
    m.set_exec_context(ExecContext::Guest);
    const auto e = m.run(10'000);
    if (kind == 3) {
      CHECK(is<exit::DoubleFault>(e));
    } else {
      REQUIRE(is<exit::MonitorFrameFault>(e));
      CHECK(std::get<exit::MonitorFrameFault>(e).paddr == target);
    }
    CHECK(std::equal(expect.begin(), expect.end(), m.phys().begin()));
    (void)before;
  }
}

TEST_CASE("host context is not subject to frame ownership") {
  Fixture f(".org 0x1000\nstart:\n  movi r1, 0x2000\n  movi r2, 3\n  store r2, [r1+0]\n  halt\n");
  f.m.set_frame_owner(2, FrameOwner::Monitor);
  CHECK(is<exit::HaltInstr>(f.run()));
  CHECK(f.m.read_phys32(0x2000) == 3);
}

TEST_CASE("a fault inside a fault handler is a double fault") {
  // Handler slot for vector 0 points at an illegal word.
  Fixture f(".org 0x800\n  .word 0x900\n.org 0x900\n  .word 0xFC000000\n"
            ".org 0x1000\nstart:\n  movi r0, 0x800\n  livt r0\n  .word 0xFC000000\n");
  CHECK(is<exit::DoubleFault>(f.run()));
}

TEST_CASE("single-step sources") {
  SUBCASE("host step auto-clears") {
    Fixture f(".org 0x1000\nstart:\n  nop\n  nop\n  halt\n");
    f.m.request_single_step(true);
    const auto e = f.run();
    REQUIRE(is<exit::DebugStep>(e));
    CHECK(std::get<exit::DebugStep>(e).pc == 0x1004);
    CHECK_FALSE(f.m.single_step_requested());
    CHECK(is<exit::HaltInstr>(f.run()));
  }
  SUBCASE("guest tf traps to vector 6") {
    Fixture f(with_ivt("  settf 1\n  nop\n"));
    CHECK(is<exit::HaltInstr>(f.run()));
    CHECK(f.m.regs().r[5] == vec::kDebugStep);
  }
}

TEST_CASE("timer count reads consume one expiry each") {
  Timer t;
  t.write_reg(0, 100, 0);
  t.write_reg(1, 1, 50);
  CHECK(t.started_at() == 50);
  CHECK(t.next_event() == 150);
  CHECK_FALSE(t.irq());
  t.tick(449);  // expiries at 150, 250, 350
  CHECK(t.irq());
  CHECK(t.read_reg(2, 449) == 3);
  CHECK(t.read_reg(2, 449) == 2);
  CHECK(t.read_reg(2, 449) == 1);
  CHECK_FALSE(t.irq());
  CHECK(t.read_reg(2, 449) == 0);
  CHECK(t.read_reg(2, 450) == 1);
  t.write_reg(1, 0, 460);
  CHECK(t.next_event() == kNever);
}

TEST_CASE("pic priority, mask and ack") {
  Pic p;
  CHECK_FALSE(p.select(0xFF));  // everything masked at reset
  p.write_reg(0, 0xF0);
  CHECK(p.select(0b0110) == 1u);
  p.mark_in_service(1);
  CHECK(p.select(0b0110) == 2u);
  p.write_reg(1, kFirstIrqVector + 1);
  CHECK(p.select(0b0110) == 1u);
  p.write_reg(0, 0xF2);
  CHECK(p.select(0b0010) == std::nullopt);
}

namespace {
struct MemBus : DmaBus {
  std::vector<uint8_t> mem = std::vector<uint8_t>(0x10000);
  bool dma_write(uint32_t paddr, std::span<const uint8_t> b) override {
    if (paddr + b.size() > mem.size()) return false;
    std::copy(b.begin(), b.end(), mem.begin() + paddr);
    return true;
  }
  bool dma_read(uint32_t paddr, std::span<uint8_t> out) override {
    if (paddr + out.size() > mem.size()) return false;
    std::copy_n(mem.begin() + paddr, out.size(), out.begin());
    return true;
  }
};
}  // namespace

TEST_CASE("disk read completes after its service delay") {
  MemBus bus;
  Disk d;
  std::vector<uint8_t> backing(4 * kSectorBytes);
  for (size_t i = 0; i < backing.size(); ++i) backing[i] = static_cast<uint8_t>(i * 7);
  d.set_backing(backing);
  d.set_cycles_per_byte(2);
  d.write_reg(port::kDiskLba, 1, 0, bus);
  d.write_reg(port::kDiskCount, 2, 0, bus);
  d.write_reg(port::kDiskAddr, 0x100, 0, bus);
  d.write_reg(port::kDiskCommand, 1, 10, bus);
  CHECK(d.read_reg(port::kDiskStatus) == status::kBusy);
  CHECK(d.next_event() == 10 + 2 * 1024);
  d.tick(10 + 2 * 1024 - 1, bus);
  CHECK(d.busy());
  d.tick(10 + 2 * 1024, bus);
  CHECK(d.read_reg(port::kDiskStatus) == status::kDone);
  CHECK(d.irq());
  CHECK(std::equal(backing.begin() + 512, backing.begin() + 1536, bus.mem.begin() + 0x100));
  d.write_reg(port::kDiskStatus, 0, 0, bus);
  CHECK_FALSE(d.irq());
  SUBCASE("out-of-range request errors immediately") {
    d.write_reg(port::kDiskLba, 3, 0, bus);
    d.write_reg(port::kDiskCommand, 1, 0, bus);
    CHECK(d.read_reg(port::kDiskStatus) == status::kError);
  }
  SUBCASE("refused DMA reports an error") {
    d.write_reg(port::kDiskAddr, 0xFF00, 0, bus);
    d.write_reg(port::kDiskCommand, 1, 0, bus);
    d.tick(1 << 20, bus);
    CHECK(d.read_reg(port::kDiskStatus) == (status::kDone | status::kError));
  }
}

TEST_CASE("nic send appends the frame to the log") {
  MemBus bus;
  Nic n;
  for (int i = 0; i < 16; ++i) bus.mem[0x200 + i] = static_cast<uint8_t>(i + 1);
  n.set_cycles_per_byte(3);
  n.write_reg(port::kNicAddr, 0x200, 0);
  n.write_reg(port::kNicLen, 16, 0);
  n.write_reg(port::kNicCommand, 1, 100);
  CHECK(n.busy());
  n.write_reg(port::kNicCommand, 1, 101);  // while busy
  n.tick(147, bus);
  CHECK(n.tx_log().empty());
  n.tick(148, bus);
  REQUIRE(n.tx_log().size() == 1);
  CHECK(n.tx_log()[0] == std::vector<uint8_t>(bus.mem.begin() + 0x200, bus.mem.begin() + 0x210));
  CHECK(n.read_reg(port::kNicStatus) == status::kDone);
}

TEST_CASE("timer interrupt wakes idle and the idle time is accounted") {
  Fixture f(with_ivt(
      "  movi r1, 1000\n  out 0x10, r1\n  movi r1, 0xFE\n  out 0x20, r1\n  movi r1, 1\n"
      "  out 0x11, r1\n  idle\n  sti\n  halt\n"));
  // Override the timer slot: its handler halts with r5 = 8.
  REQUIRE(is<exit::HaltInstr>(f.run()));
  CHECK(f.m.regs().r[5] == vec::kTimer);
  CHECK(f.m.cycles_idle() > 900);
  CHECK(f.m.cycles_total() == f.m.retired() * f.m.cost().cycles_per_instr + f.m.cycles_idle() +
                                  f.m.cycles_monitor());
}

TEST_CASE("trapped ports exit only in guest context") {
  Fixture f(".org 0x1000\nstart:\n  movi r1, 9\n  out 0x41, r1\n  in r2, 0x41\n  halt\n");
  f.m.set_trap_port(0x41, true);
  f.m.set_exec_context(ExecContext::Guest);
  auto e = f.run();
  REQUIRE(is<exit::TrappedOut>(e));
  CHECK(std::get<exit::TrappedOut>(e).port == 0x41);
  CHECK(std::get<exit::TrappedOut>(e).value == 9);
  CHECK(f.m.disk(0).count() == 0);
  CHECK_FALSE(f.m.complete_trapped_out());
  e = f.run();
  REQUIRE(is<exit::TrappedIn>(e));
  CHECK(std::get<exit::TrappedIn>(e).rd == 2);
  CHECK_FALSE(f.m.complete_trapped_in(2, 1234));
  CHECK(f.m.regs().r[2] == 1234);
  CHECK(is<exit::HaltInstr>(f.run()));
}

TEST_CASE("cycle budget exits and accounting is conserved") {
  Fixture f(".org 0x1000\nstart:\n  jmp start\n");
  CHECK(is<exit::CycleBudgetExhausted>(f.run(500)));
  CHECK(f.m.cycles_total() == 500);
  f.m.charge_monitor(77);
  CHECK(f.m.cycles_total() ==
        f.m.retired() * f.m.cost().cycles_per_instr + f.m.cycles_idle() + f.m.cycles_monitor());
}

namespace {
struct Digest final : TraceSink {
  uint64_t h = 1469598103934665603ull;
  void mix(uint64_t v) { h = (h ^ v) * 1099511628211ull; }
  void on_mem_write(uint32_t paddr, std::span<const uint8_t> b) override {
    mix(paddr);
    for (uint8_t x : b) mix(x);
  }
  void on_retire(const CpuRegs& r) override {
    for (uint32_t v : r.r) mix(v);
    mix(r.pc);
    mix(r.flags);
  }
};
}  // namespace

TEST_CASE("identical image and config give identical traces") {
  const std::string src = with_ivt(paging_setup() +
                                   "  movi r1, 200\n  movi r2, 1\nl:\n  push r1\n  pop r3\n"
                                   "  sub r1, r2\n  jnz l\n  halt\n");
  uint64_t first = 0;
  for (int k = 0; k < 3; ++k) {
    Fixture f(src);
    Digest d;
    f.m.set_trace(&d);
    REQUIRE(is<exit::HaltInstr>(f.run()));
    if (k == 0) first = d.h;
    CHECK(d.h == first);
  }
}

TEST_CASE("reset_guest keeps monitor frames and disk backing") {
  Machine m;
  m.set_frame_owner(0x30, FrameOwner::Monitor);
  m.write_phys32(0x30000, 0xABCD);
  m.write_phys32(0x1000, 0x1234);
  m.disk(1).set_backing(std::vector<uint8_t>(512, 3));
  m.regs().r[3] = 5;
  m.reset_guest();
  CHECK(m.read_phys32(0x30000) == 0xABCD);
  CHECK(m.read_phys32(0x1000) == 0);
  CHECK(m.disk(1).backing().size() == 512);
  CHECK(m.regs() == CpuRegs{});
}
