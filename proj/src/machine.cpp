#include "minipc/machine.hpp"

#include <algorithm>
#include <cstring>
#include <iostream>
#include <sstream>

namespace minipc {

namespace {

const char* access_name(Access a) {
  switch (a) {
    case Access::Read: return "read";
    case Access::Write: return "write";
    case Access::Fetch: return "fetch";
  }
  return "?";
}

}  // namespace

const char* exit_kind_name(const ExitReason& e) {
  struct V {
    const char* operator()(const exit::TrappedIn&) const { return "TrappedIn"; }
    const char* operator()(const exit::TrappedOut&) const { return "TrappedOut"; }
    const char* operator()(const exit::MonitorFrameFault&) const { return "MonitorFrameFault"; }
    const char* operator()(const exit::DebugBreak&) const { return "DebugBreak"; }
    const char* operator()(const exit::DebugStep&) const { return "DebugStep"; }
    const char* operator()(const exit::IrqIntercept&) const { return "IrqIntercept"; }
    const char* operator()(const exit::DoubleFault&) const { return "DoubleFault"; }
    const char* operator()(const exit::HaltInstr&) const { return "HaltInstr"; }
    const char* operator()(const exit::CycleBudgetExhausted&) const { return "CycleBudgetExhausted"; }
  };
  return std::visit(V{}, e);
}

std::string describe(const ExitReason& e) {
  std::ostringstream os;
  os << exit_kind_name(e) << std::hex;
  if (auto* t = std::get_if<exit::TrappedIn>(&e)) os << "{port:0x" << t->port << "}";
  if (auto* t = std::get_if<exit::TrappedOut>(&e)) os << "{port:0x" << t->port << ", value:0x" << t->value << "}";
  if (auto* t = std::get_if<exit::MonitorFrameFault>(&e)) {
    os << "{paddr:0x" << t->paddr << ", " << access_name(t->access) << ", pc:0x" << t->guest_pc << "}";
  }
  if (auto* t = std::get_if<exit::DebugBreak>(&e)) os << "{pc:0x" << t->pc << "}";
  if (auto* t = std::get_if<exit::DebugStep>(&e)) os << "{pc:0x" << t->pc << "}";
  if (auto* t = std::get_if<exit::IrqIntercept>(&e)) os << std::dec << "{vector:" << t->vector << "}";
  if (auto* t = std::get_if<exit::DoubleFault>(&e)) os << "{pc:0x" << t->pc << "}";
  return os.str();
}

Machine::Machine(MachineConfig cfg)
    : cost_(cfg.cost),
      mem_(cfg.mem_bytes, 0),
      owners_((cfg.mem_bytes + kPageBytes - 1) / kPageBytes, FrameOwner::Guest) {
  if (cfg.mem_bytes == 0 || cfg.mem_bytes % kPageBytes != 0) {
    throw std::invalid_argument("memory size must be a nonzero multiple of 4 KiB");
  }
  if (cost_.clock_hz == 0) throw std::invalid_argument("clock_hz must be positive");
  set_cost(cost_);
}

void Machine::set_cost(const CostModel& cost) {
  cost_ = cost;
  for (auto& d : disks_) d.set_cycles_per_byte(cost.disk_cycles_per_byte);
  nic_.set_cycles_per_byte(cost.nic_cycles_per_byte);
}

// ---- memory ---------------------------------------------------------------

uint32_t Machine::load32(uint32_t paddr) const {
  uint32_t v;
  std::memcpy(&v, &mem_[paddr], 4);
  return v;  // host is little-endian, as is the guest
}

void Machine::store32(uint32_t paddr, uint32_t value) {
  std::memcpy(&mem_[paddr], &value, 4);
  if (trace_) trace_->on_mem_write(paddr, std::span<const uint8_t>(&mem_[paddr], 4));
}

uint32_t Machine::read_phys32(uint32_t paddr) const {
  if (!range_ok(paddr, 4)) throw std::out_of_range("physical read out of range");
  return load32(paddr);
}

void Machine::write_phys32(uint32_t paddr, uint32_t value) {
  if (!range_ok(paddr, 4)) throw std::out_of_range("physical write out of range");
  store32(paddr, value);
}

void Machine::write_phys(uint32_t paddr, std::span<const uint8_t> bytes) {
  if (!range_ok(paddr, bytes.size())) throw std::out_of_range("physical write out of range");
  std::copy(bytes.begin(), bytes.end(), mem_.begin() + paddr);
  if (trace_ && !bytes.empty()) trace_->on_mem_write(paddr, bytes);
}

FrameOwner Machine::owner_of(uint32_t paddr) const {
  const size_t frame = paddr >> kPageShift;
  return frame < owners_.size() ? owners_[frame] : FrameOwner::Guest;
}

void Machine::set_frame_owner(uint32_t frame, FrameOwner owner) {
  if (frame >= owners_.size()) throw std::out_of_range("frame out of range");
  if (owners_[frame] == owner) return;
  owners_[frame] = owner;
  if (owner == FrameOwner::Monitor) {
    ++monitor_frames_;
  } else {
    --monitor_frames_;
  }
}

bool Machine::range_has_monitor_frame(uint32_t paddr, size_t len) const {
  if (monitor_frames_ == 0 || len == 0) return false;
  const size_t first = paddr >> kPageShift;
  const size_t last = (uint64_t{paddr} + len - 1) >> kPageShift;
  for (size_t f = first; f <= last && f < owners_.size(); ++f) {
    if (owners_[f] == FrameOwner::Monitor) return true;
  }
  return false;
}

Translation Machine::translate(uint32_t vaddr, Access access) const {
  return translate_as(vaddr, access, regs_.mode, exec_ == ExecContext::Guest);
}

Translation Machine::translate_as(uint32_t vaddr, Access access, CpuMode mode,
                                  bool check_ownership) const {
  using S = Translation::Status;
  const bool guard = check_ownership && monitor_frames_ != 0;
  uint32_t paddr = vaddr;
  if (regs_.ptbr != 0) {
    const uint64_t pte_addr = uint64_t{regs_.ptbr} + 4ull * (vaddr >> kPageShift);
    if (!range_ok(pte_addr, 4)) return {S::PageFault, 0};
    // The walk is a physical access: only the ownership check applies.
    if (guard && owners_[pte_addr >> kPageShift] == FrameOwner::Monitor) {
      return {S::MonitorFault, static_cast<uint32_t>(pte_addr)};
    }
    const uint32_t entry = load32(static_cast<uint32_t>(pte_addr));
    if (!(entry & pte::kPresent)) return {S::PageFault, 0};
    if (access == Access::Write && !(entry & pte::kWritable)) return {S::PageFault, 0};
    if (mode == CpuMode::User && !(entry & pte::kUser)) return {S::PageFault, 0};
    paddr = (entry & pte::kFrameMask) | (vaddr & (kPageBytes - 1));
  }
  if (!range_ok(paddr, 4 - (paddr & 3))) return {S::PageFault, 0};
  if (guard && owners_[paddr >> kPageShift] == FrameOwner::Monitor) {
    return {S::MonitorFault, paddr};
  }
  return {S::Ok, paddr};
}

std::optional<std::vector<uint8_t>> Machine::read_virtual(uint32_t vaddr, size_t len,
                                                          bool enforce_ownership) const {
  std::vector<uint8_t> out;
  out.reserve(len);
  for (size_t i = 0; i < len; ++i) {
    const uint32_t va = vaddr + static_cast<uint32_t>(i);
    auto t = translate_as(va, Access::Read, CpuMode::Supv, enforce_ownership);
    if (t.status != Translation::Status::Ok) return std::nullopt;
    out.push_back(mem_[t.paddr]);
  }
  return out;
}

bool Machine::write_virtual(uint32_t vaddr, std::span<const uint8_t> bytes,
                            bool enforce_ownership) {
  std::vector<uint32_t> targets;
  targets.reserve(bytes.size());
  for (size_t i = 0; i < bytes.size(); ++i) {
    auto t = translate_as(vaddr + static_cast<uint32_t>(i), Access::Read, CpuMode::Supv,
                          enforce_ownership);
    if (t.status != Translation::Status::Ok) return false;
    targets.push_back(t.paddr);
  }
  for (size_t i = 0; i < bytes.size(); ++i) {
    mem_[targets[i]] = bytes[i];
    if (trace_) trace_->on_mem_write(targets[i], bytes.subspan(i, 1));
  }
  return true;
}

bool Machine::dma_write(uint32_t paddr, std::span<const uint8_t> bytes) {
  if (!range_ok(paddr, bytes.size()) || range_has_monitor_frame(paddr, bytes.size())) {
    return false;
  }
  std::copy(bytes.begin(), bytes.end(), mem_.begin() + paddr);
  if (trace_ && !bytes.empty()) trace_->on_mem_write(paddr, bytes);
  return true;
}

bool Machine::dma_read(uint32_t paddr, std::span<uint8_t> out) {
  if (!range_ok(paddr, out.size()) || range_has_monitor_frame(paddr, out.size())) {
    return false;
  }
  std::copy_n(mem_.begin() + paddr, out.size(), out.begin());
  return true;
}

// ---- devices --------------------------------------------------------------

uint8_t Machine::raised_lines() const {
  uint8_t lines = 0;
  if (timer_.irq()) lines |= 1u << kLineTimer;
  if (disks_[0].irq() || disks_[1].irq() || disks_[2].irq()) lines |= 1u << kLineDisk;
  if (nic_.irq()) lines |= 1u << kLineNic;
  if (uart_.irq()) lines |= 1u << kLineUart;
  return lines;
}

void Machine::recompute_next_event() {
  uint64_t next = timer_.next_event();
  for (const auto& d : disks_) next = std::min(next, d.next_event());
  next_event_ = std::min(next, nic_.next_event());
}

void Machine::sync_devices() {
  const uint64_t now = cycles_total_;
  timer_.tick(now);
  for (auto& d : disks_) d.tick(now, *this);
  nic_.tick(now, *this);
  recompute_next_event();
}

uint32_t Machine::port_read(uint16_t port) {
  sync_devices();
  const uint64_t now = cycles_total_;
  uint32_t v = 0;
  if (port <= 0x02) {
    v = uart_.read_reg(port);
  } else if (port >= 0x10 && port <= 0x12) {
    v = timer_.read_reg(port - 0x10u, now);
  } else if (port >= 0x20 && port <= 0x21) {
    v = pic_.read_reg(port - 0x20u);
  } else if (port >= 0x40 && port <= 0x64 && (port & 0xF) <= 4) {
    v = disks_[(port >> 4) - 4].read_reg(port & 0xFu);
  } else if (port >= 0x80 && port <= 0x83) {
    v = nic_.read_reg(port - 0x80u);
  } else if (!warned_ports_.test(port)) {
    warned_ports_.set(port);
    std::clog << "minipc: read from unmapped port 0x" << std::hex << port << std::dec << "\n";
  }
  return v;
}

void Machine::port_write(uint16_t port, uint32_t value) {
  sync_devices();
  const uint64_t now = cycles_total_;
  if (port <= 0x02) {
    uart_.write_reg(port, value);
  } else if (port >= 0x10 && port <= 0x12) {
    timer_.write_reg(port - 0x10u, value, now);
  } else if (port >= 0x20 && port <= 0x21) {
    pic_.write_reg(port - 0x20u, value);
  } else if (port >= 0x40 && port <= 0x64 && (port & 0xF) <= 4) {
    disks_[(port >> 4) - 4].write_reg(port & 0xFu, value, now, *this);
  } else if (port >= 0x80 && port <= 0x83) {
    nic_.write_reg(port - 0x80u, value, now);
  } else if (!warned_ports_.test(port)) {
    warned_ports_.set(port);
    std::clog << "minipc: write to unmapped port 0x" << std::hex << port << std::dec << "\n";
  }
  recompute_next_event();
}

// ---- execution ------------------------------------------------------------

void Machine::set_zn(uint32_t result) {
  regs_.flags &= ~(flag::kZ | flag::kN);
  if (result == 0) regs_.flags |= flag::kZ;
  if (result & 0x80000000u) regs_.flags |= flag::kN;
}

bool Machine::deliver(unsigned vector, uint32_t epc) {
  const uint64_t slot = uint64_t{regs_.ivt} + 4ull * vector;
  if (!range_ok(slot, 4)) return false;
  if (exec_ == ExecContext::Guest && owner_of(static_cast<uint32_t>(slot)) == FrameOwner::Monitor) {
    return false;
  }
  regs_.epc = epc;
  regs_.eflags = regs_.flags;
  regs_.emode = regs_.mode;
  regs_.mode = CpuMode::Supv;
  regs_.tf = false;
  regs_.flags &= ~flag::kIE;
  regs_.pc = load32(static_cast<uint32_t>(slot));
  return true;
}

StepResult Machine::exit_with(ExitReason e) {
  StepResult r;
  r.kind = StepResult::Kind::Exit;
  r.exit = e;
  return r;
}

StepResult Machine::raise_fault(unsigned vector, uint32_t fault_vaddr) {
  const uint32_t pc = regs_.pc;
  if (in_fault_handler_) return exit_with(exit::DoubleFault{pc});
  if (vector == vec::kPageFault) regs_.r[kFaultAddrRegister] = fault_vaddr;
  if (!deliver(vector, pc)) return exit_with(exit::DoubleFault{pc});
  in_fault_handler_ = true;
  StepResult r;
  r.kind = StepResult::Kind::TrapDelivered;
  r.vector = vector;
  return r;
}

StepResult Machine::raise_trap_after_retire(unsigned vector) {
  if (!deliver(vector, regs_.pc)) return exit_with(exit::DoubleFault{regs_.pc});
  if (host_step_) {
    host_step_ = false;
    return exit_with(exit::DebugStep{regs_.pc});
  }
  StepResult r;
  r.kind = StepResult::Kind::TrapDelivered;
  r.vector = vector;
  return r;
}

StepResult Machine::retire(uint32_t next_pc) {
  regs_.pc = next_pc;
  ++retired_;
  cycles_total_ += cost_.cycles_per_instr;
  if (trace_) trace_->on_retire(regs_);
  if (host_step_) {
    host_step_ = false;
    return exit_with(exit::DebugStep{regs_.pc});
  }
  if (regs_.tf) {
    if (intercept_debug) return exit_with(exit::DebugStep{regs_.pc});
    return raise_trap_after_retire(vec::kDebugStep);
  }
  return {};
}

StepResult Machine::step() {
  using S = Translation::Status;
  if (cycles_total_ >= next_event_) sync_devices();

  const uint32_t pc = regs_.pc;
  if (pc & 3u) return raise_fault(vec::kAlignment, pc);
  const Translation ft = translate(pc, Access::Fetch);
  if (ft.status == S::PageFault) return raise_fault(vec::kPageFault, pc);
  if (ft.status == S::MonitorFault) {
    return exit_with(exit::MonitorFrameFault{ft.paddr, Access::Fetch, pc});
  }
  const auto decoded = decode(load32(ft.paddr));
  if (!decoded) return raise_fault(vec::kIllegal, pc);
  const Instruction insn = *decoded;
  if (regs_.mode == CpuMode::User && is_privileged(insn.op)) {
    return raise_fault(vec::kPrivilege, pc);
  }

  auto& r = regs_.r;
  const uint32_t next = pc + 4;
  const uint32_t imm = static_cast<uint32_t>(static_cast<int32_t>(insn.imm));
  const uint32_t branch_target = next + imm * 4u;

  // Translates a data access; on failure returns the fault/exit to report.
  auto data_access = [&](uint32_t vaddr, Access a, uint32_t& paddr) -> std::optional<StepResult> {
    if (vaddr & 3u) return raise_fault(vec::kAlignment, vaddr);
    const Translation t = translate(vaddr, a);
    if (t.status == S::PageFault) return raise_fault(vec::kPageFault, vaddr);
    if (t.status == S::MonitorFault) {
      return exit_with(exit::MonitorFrameFault{t.paddr, a, pc});
    }
    paddr = t.paddr;
    return std::nullopt;
  };

  switch (insn.op) {
    case Opcode::Nop:
      return retire(next);
    case Opcode::Halt:
      return exit_with(exit::HaltInstr{});
    case Opcode::Movi:
      r[insn.rd] = imm;
      return retire(next);
    case Opcode::Mov:
      r[insn.rd] = r[insn.rs];
      return retire(next);
    case Opcode::Add:
      r[insn.rd] += r[insn.rs];
      set_zn(r[insn.rd]);
      return retire(next);
    case Opcode::Sub:
      r[insn.rd] -= r[insn.rs];
      set_zn(r[insn.rd]);
      return retire(next);
    case Opcode::And:
      r[insn.rd] &= r[insn.rs];
      set_zn(r[insn.rd]);
      return retire(next);
    case Opcode::Or:
      r[insn.rd] |= r[insn.rs];
      set_zn(r[insn.rd]);
      return retire(next);
    case Opcode::Xor:
      r[insn.rd] ^= r[insn.rs];
      set_zn(r[insn.rd]);
      return retire(next);
    case Opcode::Shl:
      r[insn.rd] <<= (r[insn.rs] & 31u);
      set_zn(r[insn.rd]);
      return retire(next);
    case Opcode::Shr:
      r[insn.rd] >>= (r[insn.rs] & 31u);
      set_zn(r[insn.rd]);
      return retire(next);
    case Opcode::Cmp: {
      regs_.flags &= ~(flag::kZ | flag::kN);
      if (r[insn.rd] == r[insn.rs]) regs_.flags |= flag::kZ;
      if (static_cast<int32_t>(r[insn.rd]) < static_cast<int32_t>(r[insn.rs])) {
        regs_.flags |= flag::kN;
      }
      return retire(next);
    }
    case Opcode::Jmp:
      return retire(branch_target);
    case Opcode::Jz:
      return retire((regs_.flags & flag::kZ) ? branch_target : next);
    case Opcode::Jnz:
      return retire((regs_.flags & flag::kZ) ? next : branch_target);
    case Opcode::Jlt:
      return retire((regs_.flags & flag::kN) ? branch_target : next);
    case Opcode::Load: {
      uint32_t pa = 0;
      if (auto f = data_access(r[insn.rs] + imm, Access::Read, pa)) return *f;
      r[insn.rd] = load32(pa);
      return retire(next);
    }
    case Opcode::Store: {
      uint32_t pa = 0;
      if (auto f = data_access(r[insn.rs] + imm, Access::Write, pa)) return *f;
      store32(pa, r[insn.rd]);
      return retire(next);
    }
    case Opcode::Push: {
      uint32_t pa = 0;
      const uint32_t sp = r[kStackRegister] - 4;
      if (auto f = data_access(sp, Access::Write, pa)) return *f;
      store32(pa, r[insn.rd]);
      r[kStackRegister] = sp;
      return retire(next);
    }
    case Opcode::Pop: {
      uint32_t pa = 0;
      const uint32_t sp = r[kStackRegister];
      if (auto f = data_access(sp, Access::Read, pa)) return *f;
      const uint32_t v = load32(pa);
      r[kStackRegister] = sp + 4;
      r[insn.rd] = v;
      return retire(next);
    }
    case Opcode::Call: {
      uint32_t pa = 0;
      const uint32_t sp = r[kStackRegister] - 4;
      if (auto f = data_access(sp, Access::Write, pa)) return *f;
      store32(pa, next);
      r[kStackRegister] = sp;
      return retire(static_cast<uint32_t>(static_cast<uint16_t>(insn.imm)) * 4u);
    }
    case Opcode::Ret: {
      uint32_t pa = 0;
      const uint32_t sp = r[kStackRegister];
      if (auto f = data_access(sp, Access::Read, pa)) return *f;
      const uint32_t target = load32(pa);
      r[kStackRegister] = sp + 4;
      return retire(target);
    }
    case Opcode::In: {
      const auto p = static_cast<uint16_t>(insn.imm);
      if (exec_ == ExecContext::Guest && trap_ports_.test(p)) {
        return exit_with(exit::TrappedIn{p, insn.rd});
      }
      r[insn.rd] = port_read(p);
      return retire(next);
    }
    case Opcode::Out: {
      const auto p = static_cast<uint16_t>(insn.imm);
      if (exec_ == ExecContext::Guest && trap_ports_.test(p)) {
        return exit_with(exit::TrappedOut{p, r[insn.rd]});
      }
      port_write(p, r[insn.rd]);
      return retire(next);
    }
    case Opcode::Syscall: {
      StepResult res = retire(next);
      if (res.kind == StepResult::Kind::Exit) return res;
      return raise_trap_after_retire(vec::kSyscall);
    }
    case Opcode::Iret:
      regs_.flags = regs_.eflags;
      regs_.mode = regs_.emode;
      in_fault_handler_ = false;
      return retire(regs_.epc);
    case Opcode::Brk:
      if (intercept_debug) return exit_with(exit::DebugBreak{pc});
      {
        StepResult res = retire(next);
        if (res.kind == StepResult::Kind::Exit) return res;
        return raise_trap_after_retire(vec::kBreakpoint);
      }
    case Opcode::Lptbr:
      switch (static_cast<ControlReg>(insn.imm & 3)) {
        case ControlReg::Ptbr: regs_.ptbr = r[insn.rd]; break;
        case ControlReg::Epc: regs_.epc = r[insn.rd]; break;
        case ControlReg::Eflags: regs_.eflags = r[insn.rd]; break;
        case ControlReg::Emode:
          regs_.emode = (r[insn.rd] & 1u) ? CpuMode::Supv : CpuMode::User;
          break;
      }
      return retire(next);
    case Opcode::Livt:
      regs_.ivt = r[insn.rd];
      return retire(next);
    case Opcode::Sti:
      regs_.flags |= flag::kIE;
      return retire(next);
    case Opcode::Cli:
      regs_.flags &= ~flag::kIE;
      return retire(next);
    case Opcode::Settf:
      regs_.tf = (insn.imm & 1) != 0;
      return retire(next);
    case Opcode::Idle:
      if (pic_.select(raised_lines())) return retire(next);
      ++cycles_idle_;
      ++cycles_total_;
      return StepResult{StepResult::Kind::Idled, 0, {}};
  }
  return raise_fault(vec::kIllegal, pc);
}

ExitReason Machine::run(uint64_t cycle_budget) {
  const uint64_t deadline = cycles_total_ + cycle_budget;
  for (;;) {
    if (cycles_total_ >= next_event_) sync_devices();
    if (cycles_total_ >= deadline) return exit::CycleBudgetExhausted{};
    if (regs_.flags & flag::kIE) {
      if (auto line = pic_.select(raised_lines())) {
        const unsigned vector = kFirstIrqVector + *line;
        if (intercept_irqs) return exit::IrqIntercept{vector};
        if (!inject_irq(vector)) return exit::DoubleFault{regs_.pc};
        continue;
      }
    }
    const StepResult res = step();
    if (res.kind == StepResult::Kind::Exit) return res.exit;
    if (res.kind == StepResult::Kind::Idled) {
      // Nothing can wake the CPU before the next device event.
      const uint64_t target = std::min(next_event_, deadline);
      if (target > cycles_total_) {
        cycles_idle_ += target - cycles_total_;
        cycles_total_ = target;
      }
    }
  }
}

bool Machine::inject_irq(unsigned vector) {
  if (!deliver(vector, regs_.pc)) return false;
  pic_.mark_in_service(vector - kFirstIrqVector);
  return true;
}

std::optional<ExitReason> Machine::complete_trapped_in(uint8_t rd, uint32_t value) {
  regs_.r.at(rd) = value;
  StepResult res = retire(regs_.pc + 4);
  if (res.kind == StepResult::Kind::Exit) return res.exit;
  return std::nullopt;
}

std::optional<ExitReason> Machine::complete_trapped_out() {
  StepResult res = retire(regs_.pc + 4);
  if (res.kind == StepResult::Kind::Exit) return res.exit;
  return std::nullopt;
}

void Machine::charge_monitor(uint64_t cycles) {
  cycles_total_ += cycles;
  cycles_monitor_ += cycles;
  if (cycles_total_ >= next_event_) sync_devices();
}

void Machine::load_image(const Image& image) {
  for (const auto& s : image.sections) {
    if (!range_ok(s.load_paddr, s.bytes.size())) {
      throw LoadError("section at 0x" + std::to_string(s.load_paddr) + " exceeds physical memory");
    }
    if (range_has_monitor_frame(s.load_paddr, s.bytes.size())) {
      throw LoadError("section overlaps a monitor-owned frame");
    }
  }
  for (const auto& s : image.sections) write_phys(s.load_paddr, s.bytes);
  regs_.pc = image.entry;
  regs_.mode = CpuMode::Supv;
  regs_.ptbr = 0;
}

void Machine::reset_guest() {
  for (size_t f = 0; f < owners_.size(); ++f) {
    if (owners_[f] == FrameOwner::Guest) {
      std::fill_n(mem_.begin() + f * kPageBytes, kPageBytes, uint8_t{0});
    }
  }
  regs_ = CpuRegs{};
  in_fault_handler_ = false;
  host_step_ = false;
  uart_ = Uart{};
  timer_ = Timer{};
  pic_ = Pic{};
  for (auto& d : disks_) {
    auto backing = d.backing();
    d = Disk{};
    d.set_backing(std::move(backing));
  }
  nic_ = Nic{};
  set_cost(cost_);
  recompute_next_event();
}

}  // namespace minipc
