#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "minipc/cost_model.hpp"
#include "minipc/machine.hpp"
#include "minipc/queue.hpp"

namespace minipc {

enum class MonitorMode : uint8_t { Bare, Lightweight, FullVirt };
enum class DeviceClass : uint8_t { Virtualized, Passthrough };

const char* mode_name(MonitorMode mode);
std::optional<MonitorMode> parse_mode(std::string_view name);
DeviceClass device_class(MonitorMode mode, DeviceId device);

inline constexpr uint32_t kMonitorRegionBytes = 1u << 20;
/// First words of the monitor region: magic, mode, breakpoint count, then
/// the breakpoint mirror (addr, saved word) pairs.
inline constexpr uint32_t kMonitorMagic = 0x4D4D564Cu;  // "LVMM"
inline constexpr uint32_t kMonitorBreakpointSlots = 256;

enum class StopKind : uint8_t { Breakpoint, Step, ProtectionFault, DoubleFault, Pause };

struct StopReason {
  StopKind kind = StopKind::Pause;
  uint32_t pc = 0;
};

const char* stop_kind_name(StopKind kind);
/// RSP signal number: breakpoint/step 5, protection-fault 11, double-fault 6,
/// pause 2.
unsigned stop_signal(StopKind kind);

struct Disposition {
  enum class Kind { ResumeGuest, GuestFrozen, Shutdown };
  Kind kind = Kind::ResumeGuest;
  StopReason stop{};
};

struct ExitStats {
  uint64_t trapped_in = 0;
  uint64_t trapped_out = 0;
  uint64_t monitor_frame_faults = 0;
  uint64_t debug_breaks = 0;
  uint64_t debug_steps = 0;
  uint64_t irq_intercepts = 0;
  uint64_t double_faults = 0;
  uint64_t halts = 0;
  uint64_t budget_slices = 0;
  uint64_t world_switches = 0;
  uint64_t emulated_port_accesses = 0;
  uint64_t emulated_dma_bytes = 0;
  uint64_t cycles_monitor = 0;
  std::array<uint64_t, kAllDevices.size()> trapped_by_device{};

  uint64_t trapped_on(DeviceId d) const { return trapped_by_device[static_cast<size_t>(d)]; }
};

class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct MonitorEvent {
  enum class Kind { Stopped, Resumed, Serial, Shutdown };
  Kind kind = Kind::Stopped;
  uint64_t seq = 0;
  StopReason stop{};
  std::string data;
};

using EventQueue = BlockingQueue<MonitorEvent>;

/// Guest-facing emulated UART used in VMM modes; the physical UART0 stays
/// with the monitor as its debug link.
class VirtUart {
 public:
  uint32_t read(uint16_t port);
  void write(uint16_t port, uint32_t value);
  void push_rx(uint8_t b) { rx_.push_back(b); }
  std::string take_output();
  const std::string& transcript() const { return transcript_; }

 private:
  std::string pending_;
  std::string transcript_;
  std::deque<uint8_t> rx_;
};

/// The lightweight VMM. Owns the exit loop for one machine; every method
/// except post()/call()/subscribe()/request_quit() must run on the thread
/// executing guest_loop().
class Monitor {
 public:
  Monitor(Machine& machine, MonitorMode mode, const CostModel& cost);

  MonitorMode mode() const { return mode_; }
  Machine& machine() { return machine_; }
  const Machine& machine() const { return machine_; }
  const ExitStats& stats() const { return stats_; }

  Disposition handle_exit(const ExitReason& exit);

  /// Alternates run() and handle_exit(), draining debugger commands between
  /// slices. Returns when `until` accepts a disposition, the guest shuts
  /// down, quit is requested, or `cycle_budget` cycles have elapsed. While
  /// frozen it blocks on the command queue.
  ExitStats guest_loop(const std::function<bool(const Disposition&)>& until,
                       uint64_t cycle_budget = kNever);
  void set_poll_interval(uint64_t cycles) { poll_interval_ = cycles ? cycles : 1; }
  /// Consulted before the guest freezes; returning true keeps it running.
  /// The debug session uses it to step over its own breakpoints.
  void set_stop_filter(std::function<bool(const StopReason&)> f) { stop_filter_ = std::move(f); }
  /// When set, guest_loop keeps serving commands after a guest shutdown
  /// instead of returning, so a debugger can still reset the guest.
  void set_linger(bool on) { linger_ = on; }

  // Run control.
  enum class RunState { Running, Frozen, Shutdown };
  RunState run_state() const { return state_; }
  bool frozen() const { return state_ == RunState::Frozen; }
  const StopReason& last_stop() const { return last_stop_; }
  void freeze();
  void resume();
  /// Reloads the guest through the boot hook and leaves it frozen (pause).
  void reset_guest();
  void set_boot(std::function<void(Machine&)> boot) { boot_ = std::move(boot); }
  void boot();

  // Guest console (virtual UART in VMM modes, physical UART0 in BARE).
  std::string console_transcript() const;
  void console_input(std::string_view bytes);

  // Cross-thread interface.
  void post(std::function<void()> cmd) { commands_.push(std::move(cmd)); }
  template <typename F>
  auto call(F f) -> decltype(f()) {
    using R = decltype(f());
    auto task = std::make_shared<std::packaged_task<R()>>(std::move(f));
    auto fut = task->get_future();
    post([task] { (*task)(); });
    return fut.get();
  }
  std::shared_ptr<EventQueue> subscribe();
  void unsubscribe(const std::shared_ptr<EventQueue>& q);
  void request_quit();
  uint64_t stop_seq() const { return stop_seq_; }

  // Monitor-region breakpoint mirror.
  void mirror_breakpoints(const std::vector<std::pair<uint32_t, uint32_t>>& bps);
  uint32_t region_base() const { return region_base_; }

 private:
  Disposition emulate_in(const exit::TrappedIn& t);
  Disposition emulate_out(const exit::TrappedOut& t);
  Disposition after_emulation(std::optional<ExitReason> step_exit);
  void charge_exit();
  void enter_frozen(StopReason reason);
  void emit(MonitorEvent ev);
  void flush_console();
  bool drain_commands();

  Machine& machine_;
  MonitorMode mode_;
  CostModel cost_;
  ExitStats stats_;
  VirtUart vuart_;
  std::string bare_transcript_;  // UART0 output already flushed as events
  uint32_t region_base_ = 0;
  uint64_t poll_interval_ = 10'000;

  RunState state_ = RunState::Running;
  StopReason last_stop_{};
  uint64_t stop_seq_ = 0;
  std::function<void(Machine&)> boot_;
  std::function<bool(const StopReason&)> stop_filter_;
  bool linger_ = false;

  BlockingQueue<std::function<void()>> commands_;
  std::mutex subs_mu_;
  std::vector<std::shared_ptr<EventQueue>> subscribers_;
  std::atomic<bool> quit_{false};
};

}  // namespace minipc
