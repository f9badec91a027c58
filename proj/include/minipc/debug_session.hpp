#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "minipc/monitor.hpp"

namespace minipc {

/// Who may drive run control. First come holds it until released.
enum class Controller { Rsp, Console };
const char* controller_name(Controller c);

enum class BpResult { Ok, Exists, Missing, BadAddress };

/// Register file as the debugger sees it: r0..r7, pc, flags.
inline constexpr size_t kDebugRegCount = 10;
using DebugRegs = std::array<uint32_t, kDebugRegCount>;

/// Reply to one RSP command. `deferred` means the reply is the next stop
/// with a sequence number above `after_seq`.
struct RspReply {
  std::string payload;
  bool deferred = false;
  uint64_t after_seq = 0;
  bool detach = false;
};

std::string stop_code(const StopReason& r);  // "S05", "S0B", ...

/// Breakpoints, run-control ownership and the command set shared by the RSP
/// server and the console bridge. Every method must run on the monitor
/// thread (use Monitor::call from elsewhere).
class DebugSession {
 public:
  explicit DebugSession(Monitor& mon);
  ~DebugSession();
  DebugSession(const DebugSession&) = delete;
  DebugSession& operator=(const DebugSession&) = delete;

  Monitor& monitor() { return mon_; }

  bool acquire(Controller c);
  void release(Controller c);
  std::optional<Controller> holder() const { return holder_; }
  bool may_control(Controller c) const { return !holder_ || *holder_ == c; }

  DebugRegs read_regs() const;
  void write_regs(const DebugRegs& regs);
  /// Guest-virtual access with SUPV rights. Monitor frames and unmapped
  /// pages fail. Reads show the original words under breakpoints; writes
  /// over a breakpoint update its saved word and keep the trap in place.
  std::optional<std::vector<uint8_t>> read_mem(uint32_t vaddr, size_t len) const;
  bool write_mem(uint32_t vaddr, std::span<const uint8_t> bytes);

  BpResult insert_breakpoint(uint32_t vaddr);
  BpResult remove_breakpoint(uint32_t vaddr);
  void remove_all_breakpoints();
  std::vector<uint32_t> breakpoints() const;

  /// Resume from a frozen guest. Return the stop sequence number to wait
  /// beyond. Throw StateError when the guest is not frozen.
  uint64_t continue_guest();
  uint64_t step_guest();
  void pause();
  /// Reload the guest, re-plant breakpoints, stay frozen.
  void reset();
  /// Drop breakpoints and let the guest run (if it was frozen).
  void detach();

  RspReply handle_rsp(std::string_view payload, Controller from);

 private:
  struct Bp {
    uint32_t paddr;
    uint32_t saved;
  };
  uint64_t start(bool step);
  bool on_stop(const StopReason& r);
  void plant(Bp& bp);
  void mirror();

  Monitor& mon_;
  std::map<uint32_t, Bp> bps_;  // keyed by guest virtual address
  std::optional<Controller> holder_;
  std::optional<uint32_t> stepping_over_;
  bool continue_after_step_ = false;
};

}  // namespace minipc
