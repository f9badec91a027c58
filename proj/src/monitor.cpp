#include "minipc/monitor.hpp"

#include <algorithm>

namespace minipc {

const char* mode_name(MonitorMode mode) {
  switch (mode) {
    case MonitorMode::Bare: return "bare";
    case MonitorMode::Lightweight: return "lightweight";
    case MonitorMode::FullVirt: return "fullvirt";
  }
  return "?";
}

std::optional<MonitorMode> parse_mode(std::string_view name) {
  if (name == "bare") return MonitorMode::Bare;
  if (name == "lightweight") return MonitorMode::Lightweight;
  if (name == "fullvirt") return MonitorMode::FullVirt;
  return std::nullopt;
}

DeviceClass device_class(MonitorMode mode, DeviceId device) {
  switch (mode) {
    case MonitorMode::Bare:
      return DeviceClass::Passthrough;
    case MonitorMode::Lightweight:
      return (device == DeviceId::Uart0 || device == DeviceId::Timer || device == DeviceId::Pic)
                 ? DeviceClass::Virtualized
                 : DeviceClass::Passthrough;
    case MonitorMode::FullVirt:
      return DeviceClass::Virtualized;
  }
  return DeviceClass::Passthrough;
}

const char* stop_kind_name(StopKind kind) {
  switch (kind) {
    case StopKind::Breakpoint: return "breakpoint";
    case StopKind::Step: return "step";
    case StopKind::ProtectionFault: return "protection-fault";
    case StopKind::DoubleFault: return "double-fault";
    case StopKind::Pause: return "pause";
  }
  return "?";
}

unsigned stop_signal(StopKind kind) {
  switch (kind) {
    case StopKind::Breakpoint:
    case StopKind::Step: return 5;
    case StopKind::ProtectionFault: return 11;
    case StopKind::DoubleFault: return 6;
    case StopKind::Pause: return 2;
  }
  return 5;
}

// ---- virtual UART ---------------------------------------------------------

uint32_t VirtUart::read(uint16_t port) {
  switch (port) {
    case port::kUartRx: {
      if (rx_.empty()) return 0;
      const uint8_t b = rx_.front();
      rx_.pop_front();
      return b;
    }
    case port::kUartStatus:
      return 0x2u | (rx_.empty() ? 0u : 0x1u);
    default:
      return 0;
  }
}

void VirtUart::write(uint16_t port, uint32_t value) {
  if (port != port::kUartTx) return;
  const char c = static_cast<char>(value & 0xFF);
  pending_.push_back(c);
  transcript_.push_back(c);
}

std::string VirtUart::take_output() {
  std::string out;
  out.swap(pending_);
  return out;
}

// ---- monitor --------------------------------------------------------------

Monitor::Monitor(Machine& machine, MonitorMode mode, const CostModel& cost)
    : machine_(machine), mode_(mode), cost_(cost) {
  machine_.set_cost(cost);
  if (mode_ == MonitorMode::Bare) {
    machine_.set_exec_context(ExecContext::Host);
    return;
  }
  const uint32_t mem = machine_.mem_size();
  if (mem <= kMonitorRegionBytes) throw std::invalid_argument("memory too small for monitor region");
  region_base_ = mem - kMonitorRegionBytes;
  for (uint32_t f = region_base_ / kPageBytes; f < mem / kPageBytes; ++f) {
    machine_.set_frame_owner(f, FrameOwner::Monitor);
  }
  for (DeviceId d : kAllDevices) {
    if (device_class(mode_, d) != DeviceClass::Virtualized) continue;
    const PortRange r = port_range(d);
    for (uint32_t p = r.first; p <= r.last; ++p) machine_.set_trap_port(static_cast<uint16_t>(p), true);
  }
  machine_.intercept_irqs = true;
  machine_.intercept_debug = true;
  machine_.set_exec_context(ExecContext::Guest);

  machine_.write_phys32(region_base_, kMonitorMagic);
  machine_.write_phys32(region_base_ + 4, static_cast<uint32_t>(mode_));
  mirror_breakpoints({});
}

void Monitor::mirror_breakpoints(const std::vector<std::pair<uint32_t, uint32_t>>& bps) {
  if (mode_ == MonitorMode::Bare) return;
  const auto n = static_cast<uint32_t>(std::min<size_t>(bps.size(), kMonitorBreakpointSlots));
  machine_.write_phys32(region_base_ + 8, n);
  for (uint32_t i = 0; i < kMonitorBreakpointSlots; ++i) {
    const uint32_t slot = region_base_ + 16 + 8 * i;
    machine_.write_phys32(slot, i < n ? bps[i].first : 0);
    machine_.write_phys32(slot + 4, i < n ? bps[i].second : 0);
  }
}

void Monitor::charge_exit() {
  if (mode_ == MonitorMode::Bare) return;
  machine_.charge_monitor(cost_.world_switch);
  stats_.cycles_monitor += cost_.world_switch;
  ++stats_.world_switches;
}

Disposition Monitor::after_emulation(std::optional<ExitReason> step_exit) {
  if (step_exit) {
    if (const auto* s = std::get_if<exit::DebugStep>(&*step_exit)) {
      ++stats_.debug_steps;
      return {Disposition::Kind::GuestFrozen, {StopKind::Step, s->pc}};
    }
  }
  return {};
}

Disposition Monitor::emulate_in(const exit::TrappedIn& t) {
  const auto dev = device_at_port(t.port);
  machine_.charge_monitor(cost_.emulate_port);
  stats_.cycles_monitor += cost_.emulate_port;
  ++stats_.emulated_port_accesses;
  uint32_t value = 0;
  if (dev == DeviceId::Uart0) {
    value = vuart_.read(t.port);
  } else {
    value = machine_.port_read(t.port);
  }
  return after_emulation(machine_.complete_trapped_in(t.rd, value));
}

Disposition Monitor::emulate_out(const exit::TrappedOut& t) {
  const auto dev = device_at_port(t.port);
  machine_.charge_monitor(cost_.emulate_port);
  stats_.cycles_monitor += cost_.emulate_port;
  ++stats_.emulated_port_accesses;

  const bool disk = dev == DeviceId::Disk0 || dev == DeviceId::Disk1 || dev == DeviceId::Disk2;
  if (dev == DeviceId::Uart0) {
    vuart_.write(t.port, t.value);
  } else if (disk && (t.port & 0xF) == port::kDiskCommand && t.value == 1) {
    // Emulated READ: the monitor copies sector data itself, then lets the
    // device model run out its service time without touching memory.
    Disk& d = machine_.disk(static_cast<unsigned>(*dev) - static_cast<unsigned>(DeviceId::Disk0));
    machine_.sync_devices();
    const auto span = d.busy() ? std::nullopt : d.request_span();
    bool copied = false;
    if (span) {
      const uint64_t c = cost_.dma_copy_per_byte * span->size();
      machine_.charge_monitor(c);
      stats_.cycles_monitor += c;
      stats_.emulated_dma_bytes += span->size();
      copied = machine_.dma_write(d.dma_addr(), *span);
    }
    if (copied) {
      d.start_read_without_dma(machine_.cycles_total());
      machine_.sync_devices();
    } else {
      machine_.port_write(t.port, t.value);  // device reports the error
    }
  } else if (dev == DeviceId::Nic && t.port - port::kNic == port::kNicCommand && t.value == 1) {
    Nic& n = machine_.nic();
    machine_.sync_devices();
    std::vector<uint8_t> frame(n.tx_len());
    bool fetched = false;
    if (!n.busy()) {
      const uint64_t c = cost_.dma_copy_per_byte * frame.size();
      machine_.charge_monitor(c);
      stats_.cycles_monitor += c;
      stats_.emulated_dma_bytes += frame.size();
      fetched = machine_.dma_read(n.tx_addr(), frame);
    }
    if (fetched) {
      n.start_send_with_frame(std::move(frame), machine_.cycles_total());
      machine_.sync_devices();
    } else {
      machine_.port_write(t.port, t.value);
    }
  } else {
    machine_.port_write(t.port, t.value);
  }
  return after_emulation(machine_.complete_trapped_out());
}

Disposition Monitor::handle_exit(const ExitReason& e) {
  if (std::holds_alternative<exit::CycleBudgetExhausted>(e)) {
    ++stats_.budget_slices;
    return {};
  }
  if (mode_ == MonitorMode::Bare &&
      (std::holds_alternative<exit::TrappedIn>(e) || std::holds_alternative<exit::TrappedOut>(e) ||
       std::holds_alternative<exit::IrqIntercept>(e) ||
       std::holds_alternative<exit::MonitorFrameFault>(e))) {
    throw std::logic_error(std::string("unexpected exit in bare mode: ") + describe(e));
  }
  charge_exit();

  if (const auto* t = std::get_if<exit::TrappedIn>(&e)) {
    ++stats_.trapped_in;
    if (auto d = device_at_port(t->port)) ++stats_.trapped_by_device[static_cast<size_t>(*d)];
    return emulate_in(*t);
  }
  if (const auto* t = std::get_if<exit::TrappedOut>(&e)) {
    ++stats_.trapped_out;
    if (auto d = device_at_port(t->port)) ++stats_.trapped_by_device[static_cast<size_t>(*d)];
    return emulate_out(*t);
  }
  if (const auto* irq = std::get_if<exit::IrqIntercept>(&e)) {
    ++stats_.irq_intercepts;
    if (!machine_.inject_irq(irq->vector)) {
      ++stats_.double_faults;
      return {Disposition::Kind::GuestFrozen, {StopKind::DoubleFault, machine_.regs().pc}};
    }
    return {};
  }
  if (const auto* f = std::get_if<exit::MonitorFrameFault>(&e)) {
    ++stats_.monitor_frame_faults;
    return {Disposition::Kind::GuestFrozen, {StopKind::ProtectionFault, f->guest_pc}};
  }
  if (const auto* b = std::get_if<exit::DebugBreak>(&e)) {
    ++stats_.debug_breaks;
    return {Disposition::Kind::GuestFrozen, {StopKind::Breakpoint, b->pc}};
  }
  if (const auto* s = std::get_if<exit::DebugStep>(&e)) {
    ++stats_.debug_steps;
    return {Disposition::Kind::GuestFrozen, {StopKind::Step, s->pc}};
  }
  if (const auto* d = std::get_if<exit::DoubleFault>(&e)) {
    ++stats_.double_faults;
    return {Disposition::Kind::GuestFrozen, {StopKind::DoubleFault, d->pc}};
  }
  ++stats_.halts;
  return {Disposition::Kind::Shutdown, {}};
}

// ---- run control ----------------------------------------------------------

void Monitor::emit(MonitorEvent ev) {
  std::lock_guard lock(subs_mu_);
  for (auto& q : subscribers_) q->push(ev);
}

std::shared_ptr<EventQueue> Monitor::subscribe() {
  auto q = std::make_shared<EventQueue>();
  std::lock_guard lock(subs_mu_);
  subscribers_.push_back(q);
  return q;
}

void Monitor::unsubscribe(const std::shared_ptr<EventQueue>& q) {
  std::lock_guard lock(subs_mu_);
  std::erase(subscribers_, q);
}

void Monitor::request_quit() {
  quit_ = true;
  post([] {});  // wake a frozen loop
}

void Monitor::enter_frozen(StopReason reason) {
  machine_.request_single_step(false);
  state_ = RunState::Frozen;
  last_stop_ = reason;
  MonitorEvent ev;
  ev.kind = MonitorEvent::Kind::Stopped;
  ev.seq = ++stop_seq_;
  ev.stop = reason;
  emit(std::move(ev));
}

void Monitor::freeze() {
  if (state_ != RunState::Running) return;
  enter_frozen({StopKind::Pause, machine_.regs().pc});
}

void Monitor::resume() {
  if (state_ != RunState::Frozen) throw StateError("guest is not frozen");
  state_ = RunState::Running;
  MonitorEvent ev;
  ev.kind = MonitorEvent::Kind::Resumed;
  ev.seq = stop_seq_;
  emit(std::move(ev));
}

void Monitor::boot() {
  if (boot_) boot_(machine_);
}

void Monitor::reset_guest() {
  machine_.reset_guest();
  machine_.set_cost(cost_);
  boot();
  enter_frozen({StopKind::Pause, machine_.regs().pc});
}

std::string Monitor::console_transcript() const {
  if (mode_ == MonitorMode::Bare) return bare_transcript_ + machine_.uart().output();
  return vuart_.transcript();
}

void Monitor::console_input(std::string_view bytes) {
  for (char c : bytes) {
    if (mode_ == MonitorMode::Bare) {
      machine_.uart().push_rx(static_cast<uint8_t>(c));
    } else {
      vuart_.push_rx(static_cast<uint8_t>(c));
    }
  }
}

void Monitor::flush_console() {
  std::string out;
  if (mode_ == MonitorMode::Bare) {
    out = machine_.uart().take_output();
    bare_transcript_ += out;
  } else {
    out = vuart_.take_output();
  }
  if (out.empty()) return;
  MonitorEvent ev;
  ev.kind = MonitorEvent::Kind::Serial;
  ev.data = std::move(out);
  emit(std::move(ev));
}

bool Monitor::drain_commands() {
  bool any = false;
  while (auto cmd = commands_.try_pop()) {
    (*cmd)();
    any = true;
  }
  return any;
}

ExitStats Monitor::guest_loop(const std::function<bool(const Disposition&)>& until,
                              uint64_t cycle_budget) {
  const uint64_t start = machine_.cycles_total();
  const auto elapsed = [&] { return machine_.cycles_total() - start; };
  for (;;) {
    drain_commands();
    if (quit_) break;
    if (state_ == RunState::Shutdown && !linger_) break;
    if (state_ != RunState::Running) {
      if (state_ == RunState::Frozen && until({Disposition::Kind::GuestFrozen, last_stop_})) break;
      auto cmd = commands_.wait_pop();
      cmd();
      continue;
    }
    if (elapsed() >= cycle_budget) break;
    const uint64_t slice = std::min(poll_interval_, cycle_budget - elapsed());
    const ExitReason e = machine_.run(slice);
    Disposition d = handle_exit(e);
    flush_console();
    if (d.kind == Disposition::Kind::GuestFrozen && stop_filter_ && stop_filter_(d.stop)) {
      d = {};
    } else if (d.kind == Disposition::Kind::GuestFrozen) {
      enter_frozen(d.stop);
    } else if (d.kind == Disposition::Kind::Shutdown) {
      state_ = RunState::Shutdown;
      MonitorEvent ev;
      ev.kind = MonitorEvent::Kind::Shutdown;
      ev.seq = stop_seq_;
      emit(std::move(ev));
    }
    if (until(d)) break;
  }
  flush_console();
  return stats_;
}

}  // namespace minipc
