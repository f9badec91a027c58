#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <thread>

#include "minipc/assembler.hpp"
#include "minipc/bench.hpp"
#include "minipc/config.hpp"
#include "minipc/monitor.hpp"
#include "minipc/workload.hpp"

using namespace minipc;

namespace {

bool until_stop(const Disposition& d) { return d.kind != Disposition::Kind::ResumeGuest; }

// Architectural trace digest; writes into the monitor region are the
// monitor's own and do not count. With `registers_only`, memory is left to
// a final comparison: an emulated DMA copy lands before the emulated `out`
// retires, a device's own DMA just after, and neither is visible to the
// guest until it loads from the buffer.
struct Digest final : TraceSink {
  uint32_t skip_from = 0xFFFFFFFFu;
  bool registers_only = false;
  uint64_t h = 1469598103934665603ull;
  uint64_t retired = 0;
  void mix(uint64_t v) { h = (h ^ v) * 1099511628211ull; }
  void on_mem_write(uint32_t paddr, std::span<const uint8_t> b) override {
    if (registers_only || paddr >= skip_from) return;
    mix(paddr);
    for (uint8_t x : b) mix(x);
  }
  void on_retire(const CpuRegs& r) override {
    ++retired;
    for (uint32_t v : r.r) mix(v);
    mix(r.pc);
    mix(r.flags);
    mix(static_cast<uint32_t>(r.mode));
  }
};

struct XferRun {
  uint64_t digest = 0;
  std::vector<uint8_t> guest_mem;
  uint64_t retired = 0;
  ExitStats stats;
  bool halted = false;
  bool integrity = false;
  uint64_t cycles_monitor = 0;
};

XferRun run_xfer(MonitorMode mode, uint32_t rate, const CostModel& cost = {},
                 bool registers_only = false) {
  workload::XferParams p;
  p.tick_cycles = tick_cycles_for(rate, p.bytes_per_tick, cost.clock_hz);
  Machine m;
  Monitor mon(m, mode, cost);
  workload::seed_disks(m, p);
  workload::boot(m, workload::xfer_image(), p);
  Digest d;
  d.registers_only = registers_only;
  if (mode != MonitorMode::Bare) d.skip_from = mon.region_base();
  m.set_trace(&d);
  XferRun r;
  r.stats = mon.guest_loop(until_stop, 1ull << 34);
  m.set_trace(nullptr);
  r.digest = d.h;
  r.retired = d.retired;
  r.halted = mon.run_state() == Monitor::RunState::Shutdown;
  r.integrity = workload::verify_transfer(m, p).ok;
  r.cycles_monitor = m.cycles_monitor();
  r.guest_mem.assign(m.phys().begin(), m.phys().end() - kMonitorRegionBytes);
  return r;
}

std::vector<uint8_t> region_bytes(const Machine& m, uint32_t base) {
  return {m.phys().begin() + base, m.phys().end()};
}

}  // namespace

TEST_CASE("device classes per mode") {
  for (DeviceId d : kAllDevices) {
    CHECK(device_class(MonitorMode::Bare, d) == DeviceClass::Passthrough);
    CHECK(device_class(MonitorMode::FullVirt, d) == DeviceClass::Virtualized);
  }
  CHECK(device_class(MonitorMode::Lightweight, DeviceId::Uart0) == DeviceClass::Virtualized);
  CHECK(device_class(MonitorMode::Lightweight, DeviceId::Timer) == DeviceClass::Virtualized);
  CHECK(device_class(MonitorMode::Lightweight, DeviceId::Pic) == DeviceClass::Virtualized);
  for (DeviceId d : {DeviceId::Disk0, DeviceId::Disk1, DeviceId::Disk2, DeviceId::Nic}) {
    CHECK(device_class(MonitorMode::Lightweight, d) == DeviceClass::Passthrough);
  }
}

TEST_CASE("mode names round-trip") {
  for (auto mode : {MonitorMode::Bare, MonitorMode::Lightweight, MonitorMode::FullVirt}) {
    CHECK(parse_mode(mode_name(mode)) == mode);
  }
  CHECK_FALSE(parse_mode("turbo"));
}

TEST_CASE("VMM modes reserve the top MiB and trap exactly the virtualized ports") {
  for (auto mode : {MonitorMode::Lightweight, MonitorMode::FullVirt}) {
    Machine m;
    Monitor mon(m, mode, {});
    CHECK(mon.region_base() == m.mem_size() - kMonitorRegionBytes);
    CHECK(m.owner_of(mon.region_base() - 1) == FrameOwner::Guest);
    CHECK(m.owner_of(mon.region_base()) == FrameOwner::Monitor);
    CHECK(m.owner_of(m.mem_size() - 1) == FrameOwner::Monitor);
    CHECK(m.read_phys32(mon.region_base()) == kMonitorMagic);
    for (DeviceId d : kAllDevices) {
      const PortRange r = port_range(d);
      for (uint32_t p = r.first; p <= r.last; ++p) {
        CHECK(m.is_trap_port(static_cast<uint16_t>(p)) ==
              (device_class(mode, d) == DeviceClass::Virtualized));
      }
    }
  }
  Machine m;
  Monitor bare(m, MonitorMode::Bare, {});
  CHECK_FALSE(m.any_monitor_frames());
  CHECK(m.trap_port_count() == 0);
}

TEST_CASE("lightweight never traps disk or NIC ports") {
  const XferRun r = run_xfer(MonitorMode::Lightweight, 100);
  REQUIRE(r.halted);
  CHECK(r.integrity);
  for (DeviceId d : {DeviceId::Disk0, DeviceId::Disk1, DeviceId::Disk2, DeviceId::Nic}) {
    CHECK(r.stats.trapped_on(d) == 0);
  }
  CHECK(r.stats.trapped_on(DeviceId::Pic) > 0);
  CHECK(r.stats.irq_intercepts > 0);
}

TEST_CASE("pass-through transparency: bare and lightweight traces match") {
  for (uint32_t rate : {50u, 100u}) {
    const XferRun bare = run_xfer(MonitorMode::Bare, rate);
    const XferRun lw = run_xfer(MonitorMode::Lightweight, rate);
    REQUIRE(bare.halted);
    REQUIRE(lw.halted);
    CHECK(bare.retired == lw.retired);
    CHECK(bare.digest == lw.digest);
  }
}

TEST_CASE("a late tick shows only in the timer count") {
  // At 200 Mbit/s lightweight falls one tick behind after a segment burst;
  // the count register says so, and nothing else differs.
  const XferRun bare = run_xfer(MonitorMode::Bare, 200);
  const XferRun lw = run_xfer(MonitorMode::Lightweight, 200);
  CHECK(bare.digest != lw.digest);
  CHECK(bare.retired == lw.retired);
  CHECK(bare.guest_mem == lw.guest_mem);
}

TEST_CASE("emulation fidelity: full virtualization matches bare") {
  SUBCASE("xfer at a rate full virtualization sustains") {
    const XferRun bare = run_xfer(MonitorMode::Bare, 50, {}, true);
    const XferRun fv = run_xfer(MonitorMode::FullVirt, 50, {}, true);
    REQUIRE(fv.halted);
    CHECK(fv.integrity);
    CHECK(bare.retired == fv.retired);
    CHECK(bare.digest == fv.digest);
    CHECK(bare.guest_mem == fv.guest_mem);
  }
  SUBCASE("console-only program") {
    std::string src = ".org 0x1000\nstart:\n";
    for (char c : std::string("hello")) src += "  movi r2, " + std::to_string(int{c}) + "\n  out 0x00, r2\n";
    src += "  in r5, 0x02\n  halt\n";
    const Image img = assemble(src);
    uint64_t digests[2];
    std::string out[2];
    int i = 0;
    for (auto mode : {MonitorMode::Bare, MonitorMode::FullVirt}) {
      Machine m;
      Monitor mon(m, mode, {});
      m.load_image(img);
      Digest d;
      if (mode != MonitorMode::Bare) d.skip_from = mon.region_base();
      m.set_trace(&d);
      mon.guest_loop(until_stop);
      CHECK(mon.run_state() == Monitor::RunState::Shutdown);
      digests[i] = d.h;
      out[i++] = mon.console_transcript();
    }
    CHECK(digests[0] == digests[1]);
    CHECK(out[0] == "hello");
    CHECK(out[1] == "hello");
  }
}

TEST_CASE("crash probe freezes with a protection fault and leaves the region intact") {
  for (auto mode : {MonitorMode::Lightweight, MonitorMode::FullVirt}) {
    Machine m;
    Monitor mon(m, mode, {});
    workload::boot(m, workload::crash_image(), {});
    const auto before = region_bytes(m, mon.region_base());
    mon.guest_loop(until_stop);
    REQUIRE(mon.run_state() == Monitor::RunState::Frozen);
    CHECK(mon.last_stop().kind == StopKind::ProtectionFault);
    CHECK(mon.stats().monitor_frame_faults == 1);
    CHECK(region_bytes(m, mon.region_base()) == before);
    CHECK(stop_signal(mon.last_stop().kind) == 11);
  }
}

TEST_CASE("crash probe under bare ends in the kernel's page-fault path") {
  Machine m;
  Monitor mon(m, MonitorMode::Bare, {});
  workload::boot(m, workload::crash_image(), {});
  mon.guest_loop(until_stop);
  CHECK(mon.run_state() == Monitor::RunState::Shutdown);
  CHECK(m.read_phys32(workload::kFaultVector) == vec::kPageFault);
}

TEST_CASE("reset after a protection fault re-runs the workload") {
  Machine m;
  Monitor mon(m, MonitorMode::Lightweight, {});
  workload::XferParams p;
  workload::seed_disks(m, p);
  workload::boot(m, workload::crash_image(), p);
  mon.guest_loop(until_stop);
  REQUIRE(mon.frozen());
  mon.set_boot([&](Machine& mm) { workload::boot(mm, workload::xfer_image(), p); });
  mon.reset_guest();
  CHECK(mon.frozen());
  CHECK(mon.last_stop().kind == StopKind::Pause);
  mon.resume();
  mon.guest_loop(until_stop);
  CHECK(mon.run_state() == Monitor::RunState::Shutdown);
  CHECK(workload::verify_transfer(m, p).ok);
}

TEST_CASE("run-control state errors") {
  Machine m;
  Monitor mon(m, MonitorMode::Lightweight, {});
  CHECK_THROWS_AS(mon.resume(), StateError);
  mon.freeze();
  CHECK(mon.frozen());
  CHECK(mon.last_stop().kind == StopKind::Pause);
  mon.resume();
  CHECK_THROWS_AS(mon.resume(), StateError);
}

TEST_CASE("accounting: world switches never exceed monitor cycles") {
  CostModel cost;
  for (auto mode : {MonitorMode::Lightweight, MonitorMode::FullVirt}) {
    const XferRun r = run_xfer(mode, 100, cost);
    CHECK(r.stats.world_switches * cost.world_switch <= r.cycles_monitor);
    CHECK(r.stats.cycles_monitor == r.cycles_monitor);
  }
}

TEST_CASE("cross-thread freeze, inspect and resume") {
  Machine m;
  Monitor mon(m, MonitorMode::Lightweight, {});
  m.load_image(assemble(".org 0x1000\nstart:\n  movi r1, 1\nloop:\n  add r2, r1\n  jmp loop\n"));
  mon.set_poll_interval(1000);
  auto events = mon.subscribe();
  std::thread loop([&] { mon.guest_loop([](const Disposition&) { return false; }); });

  const auto regs = mon.call([&] {
    mon.freeze();
    return m.regs();
  });
  const auto ev = events->wait_pop(std::chrono::seconds(5));
  REQUIRE(ev);
  CHECK(ev->kind == MonitorEvent::Kind::Stopped);
  CHECK(ev->stop.kind == StopKind::Pause);
  CHECK(ev->stop.pc == regs.pc);
  // Frozen: nothing retires between two inspections.
  const auto again = mon.call([&] { return m.regs(); });
  CHECK(again == regs);
  mon.call([&] { mon.resume(); });
  mon.request_quit();
  loop.join();
  CHECK(m.regs().r[2] >= regs.r[2]);
  mon.unsubscribe(events);
}

TEST_CASE("stop filter can keep the guest running") {
  Machine m;
  Monitor mon(m, MonitorMode::Lightweight, {});
  m.load_image(assemble(".org 0x1000\nstart:\n  brk\n  halt\n"));
  int seen = 0;
  mon.set_stop_filter([&](const StopReason& r) {
    ++seen;
    if (r.kind == StopKind::Breakpoint) m.regs().pc += 4;  // skip the trap
    return true;
  });
  mon.guest_loop(until_stop);
  CHECK(seen == 1);
  CHECK(mon.run_state() == Monitor::RunState::Shutdown);
}

TEST_CASE("config JSON parsing") {
  const RunConfig c = parse_config(
      R"({"mode":"fullvirt","cost":{"world_switch":11,"emulate_port":22,"dma_copy_per_byte":3,
          "clock_hz":1000,"disk_cycles_per_byte":4,"nic_cycles_per_byte":5},"mem_mib":32,
          "extra":true})");
  CHECK(c.mode == MonitorMode::FullVirt);
  CHECK(c.cost.world_switch == 11);
  CHECK(c.cost.emulate_port == 22);
  CHECK(c.cost.dma_copy_per_byte == 3);
  CHECK(c.cost.clock_hz == 1000);
  CHECK(c.cost.disk_cycles_per_byte == 4);
  CHECK(c.cost.nic_cycles_per_byte == 5);
  CHECK(c.mem_mib == 32);
  CHECK(parse_config(config_to_json(c)).cost == c.cost);

  const RunConfig d = parse_config("{}");
  CHECK(d.mode == MonitorMode::Lightweight);
  CHECK(d.cost == CostModel{});

  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"mode":"warp"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"cost":{"world_switch":-1}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"cost":{"clock_hz":0}})"), ConfigError);
}

TEST_CASE("shipped calibrated config matches the built-in defaults") {
  const RunConfig c = load_config_file(MINIPC_SOURCE_DIR "/config/calibrated.json");
  CHECK(c.cost == CostModel{});
  CHECK(c.mode == MonitorMode::Lightweight);
}
