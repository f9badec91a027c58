#include "minipc/debug_session.hpp"

#include <algorithm>
#include <cstdio>

#include "minipc/isa.hpp"
#include "minipc/rsp.hpp"

namespace minipc {

namespace {

constexpr size_t kMaxMemRequest = 4096;

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  size_t pos = 0;
  for (;;) {
    const size_t at = s.find(sep, pos);
    out.push_back(s.substr(pos, at == std::string_view::npos ? at : at - pos));
    if (at == std::string_view::npos) return out;
    pos = at + 1;
  }
}

bool overlaps(uint32_t a, size_t alen, uint32_t b, size_t blen) {
  return uint64_t{a} < uint64_t{b} + blen && uint64_t{b} < uint64_t{a} + alen;
}

}  // namespace

const char* controller_name(Controller c) {
  return c == Controller::Rsp ? "rsp" : "console";
}

std::string stop_code(const StopReason& r) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "S%02X", stop_signal(r.kind));
  return buf;
}

DebugSession::DebugSession(Monitor& mon) : mon_(mon) {
  mon_.set_stop_filter([this](const StopReason& r) { return on_stop(r); });
}

DebugSession::~DebugSession() { mon_.set_stop_filter(nullptr); }

bool DebugSession::acquire(Controller c) {
  if (holder_ && *holder_ != c) return false;
  holder_ = c;
  return true;
}

void DebugSession::release(Controller c) {
  if (holder_ == c) holder_.reset();
}

DebugRegs DebugSession::read_regs() const {
  const CpuRegs& r = mon_.machine().regs();
  DebugRegs out{};
  std::copy(r.r.begin(), r.r.end(), out.begin());
  out[8] = r.pc;
  out[9] = r.flags;
  return out;
}

void DebugSession::write_regs(const DebugRegs& regs) {
  CpuRegs& r = mon_.machine().regs();
  std::copy(regs.begin(), regs.begin() + kRegisterCount, r.r.begin());
  r.pc = regs[8];
  r.flags = regs[9];
}

std::optional<std::vector<uint8_t>> DebugSession::read_mem(uint32_t vaddr, size_t len) const {
  auto bytes = mon_.machine().read_virtual(vaddr, len, true);
  if (!bytes) return std::nullopt;
  for (const auto& [addr, bp] : bps_) {
    if (!overlaps(vaddr, len, addr, 4)) continue;
    for (unsigned i = 0; i < 4; ++i) {
      const uint64_t at = uint64_t{addr} + i;
      if (at >= vaddr && at < uint64_t{vaddr} + len) {
        (*bytes)[at - vaddr] = static_cast<uint8_t>(bp.saved >> (8 * i));
      }
    }
  }
  return bytes;
}

bool DebugSession::write_mem(uint32_t vaddr, std::span<const uint8_t> bytes) {
  Machine& m = mon_.machine();
  if (!m.write_virtual(vaddr, bytes, true)) return false;
  bool touched = false;
  for (auto& [addr, bp] : bps_) {
    if (!overlaps(vaddr, bytes.size(), addr, 4)) continue;
    // The new bytes belong to the saved word; the trap stays planted.
    for (unsigned i = 0; i < 4; ++i) {
      const uint64_t at = uint64_t{addr} + i;
      if (at >= vaddr && at < uint64_t{vaddr} + bytes.size()) {
        bp.saved = (bp.saved & ~(0xFFu << (8 * i))) | uint32_t{bytes[at - vaddr]} << (8 * i);
      }
    }
    m.write_phys32(bp.paddr, kBrkWord);
    touched = true;
  }
  if (touched) mirror();
  return true;
}

void DebugSession::plant(Bp& bp) {
  Machine& m = mon_.machine();
  bp.saved = m.read_phys32(bp.paddr);
  m.write_phys32(bp.paddr, kBrkWord);
}

BpResult DebugSession::insert_breakpoint(uint32_t vaddr) {
  if (vaddr % 4) return BpResult::BadAddress;
  if (bps_.contains(vaddr)) return BpResult::Exists;
  const auto t = mon_.machine().translate_as(vaddr, Access::Read, CpuMode::Supv, true);
  if (t.status != Translation::Status::Ok) return BpResult::BadAddress;
  Bp bp{t.paddr, 0};
  plant(bp);
  bps_.emplace(vaddr, bp);
  mirror();
  return BpResult::Ok;
}

BpResult DebugSession::remove_breakpoint(uint32_t vaddr) {
  auto it = bps_.find(vaddr);
  if (it == bps_.end()) return BpResult::Missing;
  mon_.machine().write_phys32(it->second.paddr, it->second.saved);
  bps_.erase(it);
  if (stepping_over_ == vaddr) stepping_over_.reset();
  mirror();
  return BpResult::Ok;
}

void DebugSession::remove_all_breakpoints() {
  for (const auto& [addr, bp] : bps_) {
    // A breakpoint lifted for a step-over already holds its original word.
    if (stepping_over_ != addr) mon_.machine().write_phys32(bp.paddr, bp.saved);
  }
  bps_.clear();
  stepping_over_.reset();
  mirror();
}

std::vector<uint32_t> DebugSession::breakpoints() const {
  std::vector<uint32_t> out;
  for (const auto& [addr, bp] : bps_) out.push_back(addr);
  return out;
}

void DebugSession::mirror() {
  std::vector<std::pair<uint32_t, uint32_t>> v;
  v.reserve(bps_.size());
  for (const auto& [addr, bp] : bps_) v.emplace_back(addr, bp.saved);
  mon_.mirror_breakpoints(v);
}

uint64_t DebugSession::start(bool step) {
  if (!mon_.frozen()) throw StateError("guest is not frozen");
  const uint64_t seq = mon_.stop_seq();
  Machine& m = mon_.machine();
  auto it = bps_.find(m.regs().pc);
  if (it != bps_.end()) {
    // Run the original instruction once, then put the trap back.
    m.write_phys32(it->second.paddr, it->second.saved);
    stepping_over_ = it->first;
    continue_after_step_ = !step;
    m.request_single_step(true);
  } else if (step) {
    m.request_single_step(true);
  }
  mon_.resume();
  return seq;
}

uint64_t DebugSession::continue_guest() { return start(false); }
uint64_t DebugSession::step_guest() { return start(true); }

bool DebugSession::on_stop(const StopReason& r) {
  if (!stepping_over_) return false;
  auto it = bps_.find(*stepping_over_);
  stepping_over_.reset();
  if (it != bps_.end()) mon_.machine().write_phys32(it->second.paddr, kBrkWord);
  const bool keep_going = continue_after_step_ && r.kind == StopKind::Step;
  continue_after_step_ = false;
  return keep_going;
}

void DebugSession::pause() { mon_.freeze(); }

void DebugSession::reset() {
  stepping_over_.reset();
  continue_after_step_ = false;
  mon_.reset_guest();
  for (auto it = bps_.begin(); it != bps_.end();) {
    const auto t = mon_.machine().translate_as(it->first, Access::Read, CpuMode::Supv, true);
    if (t.status != Translation::Status::Ok) {
      it = bps_.erase(it);
      continue;
    }
    it->second.paddr = t.paddr;
    plant(it->second);
    ++it;
  }
  mirror();
}

void DebugSession::detach() {
  remove_all_breakpoints();
  if (mon_.frozen()) mon_.resume();
}

RspReply DebugSession::handle_rsp(std::string_view p, Controller from) {
  const auto reply = [](std::string s) { return RspReply{std::move(s)}; };
  if (p.empty()) return reply("");
  const char cmd = p.front();
  const std::string_view args = p.substr(1);
  const bool mutating = cmd == 'G' || cmd == 'M' || cmd == 'Z' || cmd == 'z' || cmd == 'c' ||
                        cmd == 's' || cmd == 'k';
  if (mutating && !may_control(from)) return reply("E03");

  switch (cmd) {
    case '?':
      if (mon_.run_state() == Monitor::RunState::Shutdown) return reply("W00");
      return reply(stop_code(mon_.last_stop()));
    case 'g': {
      const DebugRegs regs = read_regs();
      std::string out;
      for (uint32_t v : regs) {
        const uint8_t le[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                               static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
        out += rsp::to_hex(le);
      }
      return reply(out);
    }
    case 'G': {
      const auto bytes = rsp::from_hex(args);
      if (!bytes || bytes->size() != kDebugRegCount * 4) return reply("E02");
      DebugRegs regs{};
      for (size_t i = 0; i < kDebugRegCount; ++i) {
        const uint8_t* b = bytes->data() + 4 * i;
        regs[i] = uint32_t{b[0]} | uint32_t{b[1]} << 8 | uint32_t{b[2]} << 16 | uint32_t{b[3]} << 24;
      }
      write_regs(regs);
      return reply("OK");
    }
    case 'm': {
      const auto parts = split(args, ',');
      if (parts.size() != 2) return reply("E02");
      const auto addr = rsp::parse_hex_u32(parts[0]);
      const auto len = rsp::parse_hex_u32(parts[1]);
      if (!addr || !len || *len > kMaxMemRequest) return reply("E02");
      const auto bytes = read_mem(*addr, *len);
      if (!bytes) return reply("E01");
      return reply(rsp::to_hex(*bytes));
    }
    case 'M': {
      const size_t colon = args.find(':');
      if (colon == std::string_view::npos) return reply("E02");
      const auto parts = split(args.substr(0, colon), ',');
      if (parts.size() != 2) return reply("E02");
      const auto addr = rsp::parse_hex_u32(parts[0]);
      const auto len = rsp::parse_hex_u32(parts[1]);
      const auto bytes = rsp::from_hex(args.substr(colon + 1));
      if (!addr || !len || !bytes || bytes->size() != *len || *len > kMaxMemRequest) {
        return reply("E02");
      }
      return reply(write_mem(*addr, *bytes) ? "OK" : "E01");
    }
    case 'Z':
    case 'z': {
      const auto parts = split(args, ',');
      if (parts.size() != 3) return reply("E02");
      if (parts[0] != "0") return reply("");  // only software breakpoints
      const auto addr = rsp::parse_hex_u32(parts[1]);
      if (!addr || parts[2] != "4" || *addr % 4) return reply("E02");
      if (cmd == 'z') {
        remove_breakpoint(*addr);  // removing an absent breakpoint is not an error
        return reply("OK");
      }
      const BpResult r = insert_breakpoint(*addr);
      return reply(r == BpResult::BadAddress ? "E01" : "OK");
    }
    case 'c':
    case 's': {
      if (!mon_.frozen()) return reply("E04");
      if (!args.empty()) {
        const auto addr = rsp::parse_hex_u32(args);
        if (!addr) return reply("E02");
        mon_.machine().regs().pc = *addr;
      }
      RspReply r;
      r.deferred = true;
      r.after_seq = cmd == 'c' ? continue_guest() : step_guest();
      return r;
    }
    case 'k': {
      detach();
      release(from);
      RspReply r = reply("OK");
      r.detach = true;
      return r;
    }
    default:
      return reply("");
  }
}

}  // namespace minipc
