#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "minipc/cost_model.hpp"
#include "minipc/devices.hpp"
#include "minipc/image.hpp"
#include "minipc/isa.hpp"

namespace minipc {

inline constexpr uint32_t kPageBytes = 4096;
inline constexpr uint32_t kPageShift = 12;

enum class CpuMode : uint8_t { User = 0, Supv = 1 };

namespace flag {
inline constexpr uint32_t kZ = 1u << 0;
inline constexpr uint32_t kN = 1u << 1;
inline constexpr uint32_t kIE = 1u << 2;
}  // namespace flag

namespace pte {
inline constexpr uint32_t kPresent = 1u << 0;
inline constexpr uint32_t kWritable = 1u << 1;
inline constexpr uint32_t kUser = 1u << 2;
inline constexpr uint32_t kFrameMask = 0xFFFFF000u;
}  // namespace pte

struct CpuRegs {
  std::array<uint32_t, kRegisterCount> r{};
  uint32_t pc = 0;
  uint32_t flags = 0;
  CpuMode mode = CpuMode::Supv;
  uint32_t ptbr = 0;
  uint32_t ivt = 0;
  bool tf = false;
  uint32_t epc = 0;
  uint32_t eflags = 0;
  CpuMode emode = CpuMode::Supv;

  friend bool operator==(const CpuRegs&, const CpuRegs&) = default;
};

enum class Access : uint8_t { Read, Write, Fetch };
enum class FrameOwner : uint8_t { Guest, Monitor };
/// Execution tag: the frame-ownership check applies only to Guest accesses.
enum class ExecContext : uint8_t { Host, Guest };

namespace exit {
struct TrappedIn {
  uint16_t port;
  uint8_t rd;
};
struct TrappedOut {
  uint16_t port;
  uint32_t value;
};
struct MonitorFrameFault {
  uint32_t paddr;
  Access access;
  uint32_t guest_pc;
};
struct DebugBreak {
  uint32_t pc;
};
struct DebugStep {
  uint32_t pc;
};
struct IrqIntercept {
  unsigned vector;
};
struct DoubleFault {
  uint32_t pc;
};
struct HaltInstr {};
struct CycleBudgetExhausted {};
}  // namespace exit

using ExitReason =
    std::variant<exit::TrappedIn, exit::TrappedOut, exit::MonitorFrameFault,
                 exit::DebugBreak, exit::DebugStep, exit::IrqIntercept,
                 exit::DoubleFault, exit::HaltInstr, exit::CycleBudgetExhausted>;

const char* exit_kind_name(const ExitReason& e);
std::string describe(const ExitReason& e);

struct StepResult {
  enum class Kind { Retired, Idled, TrapDelivered, Exit };
  Kind kind = Kind::Retired;
  unsigned vector = 0;
  ExitReason exit{};
};

struct Translation {
  enum class Status { Ok, PageFault, MonitorFault };
  Status status = Status::Ok;
  uint32_t paddr = 0;
};

class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Observer for architectural-trace comparisons.
class TraceSink {
 public:
  virtual ~TraceSink() = default;
  virtual void on_mem_write(uint32_t paddr, std::span<const uint8_t> bytes) = 0;
  virtual void on_retire(const CpuRegs& regs) = 0;
};

struct MachineConfig {
  uint32_t mem_bytes = 16u << 20;
  CostModel cost;
};

/// One simulated MiniPC-32: CPU, physical memory with frame ownership,
/// the fixed device set, and cycle counters. Single-owner; not thread-safe.
class Machine final : public DmaBus {
 public:
  explicit Machine(MachineConfig cfg = {});

  // --- architectural state -------------------------------------------------
  CpuRegs& regs() { return regs_; }
  const CpuRegs& regs() const { return regs_; }
  const CostModel& cost() const { return cost_; }
  void set_cost(const CostModel& cost);

  uint32_t mem_size() const { return static_cast<uint32_t>(mem_.size()); }
  std::span<const uint8_t> phys() const { return mem_; }
  /// Unchecked physical accessors for the host side (monitor, harness).
  uint32_t read_phys32(uint32_t paddr) const;
  void write_phys32(uint32_t paddr, uint32_t value);
  void write_phys(uint32_t paddr, std::span<const uint8_t> bytes);

  Translation translate(uint32_t vaddr, Access access) const;
  Translation translate_as(uint32_t vaddr, Access access, CpuMode mode,
                           bool check_ownership) const;

  /// Virtual-address access with SUPV rights for the debugger. Writes only
  /// require P. Returns nullopt/false on an unmapped page, or on a MONITOR
  /// frame when `enforce_ownership` is set.
  std::optional<std::vector<uint8_t>> read_virtual(uint32_t vaddr, size_t len,
                                                   bool enforce_ownership) const;
  bool write_virtual(uint32_t vaddr, std::span<const uint8_t> bytes,
                     bool enforce_ownership);

  // --- third protection level ----------------------------------------------
  FrameOwner owner_of(uint32_t paddr) const;
  void set_frame_owner(uint32_t frame, FrameOwner owner);
  bool any_monitor_frames() const { return monitor_frames_ != 0; }
  ExecContext exec_context() const { return exec_; }
  void set_exec_context(ExecContext c) { exec_ = c; }

  // --- interception controls -----------------------------------------------
  void set_trap_port(uint16_t port, bool trapped) { trap_ports_.set(port, trapped); }
  bool is_trap_port(uint16_t port) const { return trap_ports_.test(port); }
  size_t trap_port_count() const { return trap_ports_.count(); }
  bool intercept_irqs = false;
  bool intercept_debug = false;
  /// Host-requested single step: one DebugStep exit after the next retired
  /// instruction. Independent of the guest-visible tf bit.
  void request_single_step(bool on) { host_step_ = on; }
  bool single_step_requested() const { return host_step_; }

  // --- execution -----------------------------------------------------------
  StepResult step();
  ExitReason run(uint64_t cycle_budget);

  /// Direct device register access (pass-through path, or the monitor).
  uint32_t port_read(uint16_t port);
  void port_write(uint16_t port, uint32_t value);

  /// Finish an IN/OUT that exited to the monitor. Returns a DebugStep exit if
  /// the retirement should stop for single-stepping.
  std::optional<ExitReason> complete_trapped_in(uint8_t rd, uint32_t value);
  std::optional<ExitReason> complete_trapped_out();
  /// Vector a device interrupt into the guest. False when delivery faults.
  bool inject_irq(unsigned vector);
  void charge_monitor(uint64_t cycles);

  void load_image(const Image& image);
  /// Zero guest-owned memory, reset CPU and devices. Disk backings survive.
  void reset_guest();

  // --- devices -------------------------------------------------------------
  Uart& uart() { return uart_; }
  const Uart& uart() const { return uart_; }
  Timer& timer() { return timer_; }
  const Timer& timer() const { return timer_; }
  Pic& pic() { return pic_; }
  Disk& disk(unsigned i) { return disks_.at(i); }
  const Disk& disk(unsigned i) const { return disks_.at(i); }
  Nic& nic() { return nic_; }
  const Nic& nic() const { return nic_; }
  uint8_t raised_lines() const;
  void sync_devices();

  // --- counters ------------------------------------------------------------
  uint64_t cycles_total() const { return cycles_total_; }
  uint64_t cycles_idle() const { return cycles_idle_; }
  uint64_t cycles_monitor() const { return cycles_monitor_; }
  uint64_t retired() const { return retired_; }

  void set_trace(TraceSink* sink) { trace_ = sink; }

  // DmaBus
  bool dma_write(uint32_t paddr, std::span<const uint8_t> bytes) override;
  bool dma_read(uint32_t paddr, std::span<uint8_t> out) override;

 private:
  StepResult retire(uint32_t next_pc);
  StepResult raise_fault(unsigned vector, uint32_t fault_vaddr);
  StepResult raise_trap_after_retire(unsigned vector);
  bool deliver(unsigned vector, uint32_t epc);
  StepResult exit_with(ExitReason e);
  void store32(uint32_t paddr, uint32_t value);
  uint32_t load32(uint32_t paddr) const;
  bool range_ok(uint64_t paddr, uint64_t len) const { return paddr + len <= mem_.size(); }
  bool range_has_monitor_frame(uint32_t paddr, size_t len) const;
  void recompute_next_event();
  void set_zn(uint32_t result);

  CpuRegs regs_;
  CostModel cost_;
  std::vector<uint8_t> mem_;
  std::vector<FrameOwner> owners_;
  size_t monitor_frames_ = 0;
  ExecContext exec_ = ExecContext::Host;
  std::bitset<65536> trap_ports_;
  bool host_step_ = false;
  bool in_fault_handler_ = false;

  Uart uart_;
  Timer timer_;
  Pic pic_;
  std::array<Disk, 3> disks_;
  Nic nic_;
  uint64_t next_event_ = kNever;
  std::bitset<65536> warned_ports_;

  uint64_t cycles_total_ = 0;
  uint64_t cycles_idle_ = 0;
  uint64_t cycles_monitor_ = 0;
  uint64_t retired_ = 0;
  TraceSink* trace_ = nullptr;
};

}  // namespace minipc
