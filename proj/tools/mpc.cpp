// mpc: assembler, disassembler, runner, bench and calibration front end.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "minipc/assembler.hpp"
#include "minipc/bench.hpp"
#include "minipc/calibrate.hpp"
#include "minipc/config.hpp"
#include "minipc/debug_session.hpp"
#include "minipc/image.hpp"
#include "minipc/monitor.hpp"
#include "minipc/rsp_server.hpp"
#include "minipc/workload.hpp"
#include "minipc/ws_bridge.hpp"

using namespace minipc;

namespace {

std::atomic<bool> g_interrupted{false};

void on_sigint(int) { g_interrupted = true; }

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

int cmd_asm(const std::string& in, const std::string& out) {
  try {
    write_image_file(assemble(read_text(in)), out);
  } catch (const AsmErrors& e) {
    for (const auto& err : e.errors()) std::cerr << in << ":" << err.line << ": " << err.message << "\n";
    return 1;
  }
  return 0;
}

int cmd_disasm(const std::string& path) {
  std::cout << disassemble_image(read_image_file(path));
  return 0;
}

class PrintTrace final : public TraceSink {
 public:
  explicit PrintTrace(const Machine& m) : m_(m) {}
  void on_mem_write(uint32_t, std::span<const uint8_t>) override {}
  void on_retire(const CpuRegs& regs) override {
    // pc has already advanced; report the instruction that retired.
    const uint32_t pc = last_pc_;
    last_pc_ = regs.pc;
    const auto t = m_.translate_as(pc, Access::Fetch, regs.mode, true);
    const uint32_t word = t.status == Translation::Status::Ok ? m_.read_phys32(t.paddr) : 0;
    std::fprintf(stderr, "%08x  %s\n", pc, disassemble(pc, word).c_str());
  }
  void seed(uint32_t pc) { last_pc_ = pc; }

 private:
  const Machine& m_;
  uint32_t last_pc_ = 0;
};

// Images that only occupy memory above the kernel are applications: they
// boot under the shipped kernel with the default transfer parameters.
bool is_app_image(const Image& img) {
  for (const auto& s : img.sections) {
    if (s.load_paddr < 0x10000) return false;
  }
  return !img.sections.empty();
}

struct RunOptions {
  std::string image;
  std::string mode;
  std::string config;
  int gdb_port = -1;
  int ws_port = -1;
  bool trace = false;
  uint64_t max_cycles = 0;
};

int cmd_run(const RunOptions& o) {
  RunConfig cfg;
  if (!o.config.empty()) cfg = load_config_file(o.config);
  if (!o.mode.empty()) {
    const auto m = parse_mode(o.mode);
    if (!m) throw std::runtime_error("unknown mode " + o.mode);
    cfg.mode = *m;
  }
  const Image img = read_image_file(o.image);

  Machine m(MachineConfig{cfg.mem_mib << 20, cfg.cost});
  Monitor mon(m, cfg.mode, cfg.cost);
  const bool app = is_app_image(img);
  workload::XferParams p;
  p.mem_top = m.mem_size();
  if (app) workload::seed_disks(m, p);
  mon.set_boot([&](Machine& mm) {
    if (app) {
      workload::boot(mm, img, p);
    } else {
      mm.load_image(img);
    }
  });
  mon.boot();

  PrintTrace tracer(m);
  if (o.trace) {
    tracer.seed(m.regs().pc);
    m.set_trace(&tracer);
  }

  const bool serving = o.gdb_port >= 0 || o.ws_port >= 0;
  std::unique_ptr<DebugSession> session;
  std::unique_ptr<RspServer> rsp;
  std::unique_ptr<WsBridge> ws;
  std::thread watcher;
  std::atomic<bool> done{false};

  if (serving) {
    session = std::make_unique<DebugSession>(mon);
    mon.set_linger(true);
    if (o.gdb_port >= 0) {
      rsp = std::make_unique<RspServer>(*session, static_cast<uint16_t>(o.gdb_port), "0.0.0.0");
      rsp->start();
      std::cerr << "rsp listening on " << rsp->port() << "\n";
    }
    if (o.ws_port >= 0) {
      ws = std::make_unique<WsBridge>(*session, static_cast<uint16_t>(o.ws_port), "0.0.0.0");
      ws->start();
      std::cerr << "console bridge on ws://0.0.0.0:" << ws->port() << "/ws\n";
    }
    std::signal(SIGINT, on_sigint);
    std::signal(SIGTERM, on_sigint);
    watcher = std::thread([&] {
      while (!done && !g_interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      if (!done) {
        // Servers must stop while the loop still serves their calls.
        if (ws) ws->stop();
        if (rsp) rsp->stop();
        mon.request_quit();
      }
    });
    mon.guest_loop([](const Disposition&) { return false; });
  } else {
    mon.guest_loop(
        [](const Disposition& d) { return d.kind != Disposition::Kind::ResumeGuest; },
        o.max_cycles ? o.max_cycles : kNever);
  }
  done = true;
  if (watcher.joinable()) watcher.join();
  m.set_trace(nullptr);

  std::cout << mon.console_transcript();
  if (!mon.console_transcript().empty() && mon.console_transcript().back() != '\n') std::cout << "\n";

  const ExitStats& st = mon.stats();
  std::fprintf(stderr,
               "mode %s  cycles %llu  idle %llu  monitor %llu  retired %llu\n"
               "exits: in %llu  out %llu  irq %llu  monitor-frame %llu  debug %llu/%llu\n",
               mode_name(cfg.mode), static_cast<unsigned long long>(m.cycles_total()),
               static_cast<unsigned long long>(m.cycles_idle()),
               static_cast<unsigned long long>(m.cycles_monitor()),
               static_cast<unsigned long long>(m.retired()),
               static_cast<unsigned long long>(st.trapped_in),
               static_cast<unsigned long long>(st.trapped_out),
               static_cast<unsigned long long>(st.irq_intercepts),
               static_cast<unsigned long long>(st.monitor_frame_faults),
               static_cast<unsigned long long>(st.debug_breaks),
               static_cast<unsigned long long>(st.debug_steps));

  switch (mon.run_state()) {
    case Monitor::RunState::Shutdown:
      if (app && m.read_phys32(workload::kFaultVector) != workload::kNoFault) {
        std::fprintf(stderr, "guest fault: vector %u at 0x%08x\n",
                     m.read_phys32(workload::kFaultVector), m.read_phys32(workload::kFaultVaddr));
        return 3;
      }
      std::fprintf(stderr, "guest halted\n");
      return 0;
    case Monitor::RunState::Frozen:
      std::fprintf(stderr, "guest stopped: %s at 0x%08x\n", stop_kind_name(mon.last_stop().kind),
                   mon.last_stop().pc);
      return mon.last_stop().kind == StopKind::Pause ? 0 : 3;
    case Monitor::RunState::Running:
      std::fprintf(stderr, serving ? "interrupted\n" : "cycle budget exhausted\n");
      return serving ? 0 : 4;
  }
  return 0;
}

struct BenchOptions {
  std::string modes = "bare,lightweight,fullvirt";
  std::string rates = "50:1000:50";
  double total_mib = 2;
  uint32_t segment_kib = 1024;
  std::string config;
  std::string out;
};

int cmd_bench(const BenchOptions& o) {
  BenchConfig bc;
  if (!o.config.empty()) bc.cost = load_config_file(o.config).cost;
  bc.modes = parse_modes(o.modes);
  bc.rates_mbps = parse_rates(o.rates);
  bc.total_bytes = static_cast<uint32_t>(o.total_mib * (1u << 20));
  bc.segment_bytes = o.segment_kib << 10;
  const BenchReport r = run_sweep(bc);
  if (o.out.empty() || o.out == "-") {
    emit_csv(r, std::cout);
  } else {
    emit_csv(r, o.out);
  }
  std::cerr << format_summary(r);
  if (!r.integrity_ok()) {
    std::cerr << "integrity check FAILED\n";
    return 2;
  }
  return 0;
}

struct CalibrateOptions {
  CalibrationTargets targets;
  std::string config;
  std::string out;
};

int cmd_calibrate(const CalibrateOptions& o) {
  BenchConfig bc;
  if (!o.config.empty()) bc.cost = load_config_file(o.config).cost;
  const CalibrationResult r = calibrate(o.targets, bc);
  std::cerr << r.log;
  if (!r.ok) {
    std::cerr << "calibration failed\n";
    return 2;
  }
  const std::string json = calibration_json(o.targets, r);
  if (o.out.empty() || o.out == "-") {
    std::cout << json;
  } else {
    std::ofstream f(o.out, std::ios::binary);
    f << json;
    if (!f) throw std::runtime_error("cannot write " + o.out);
  }
  std::cerr << format_summary(r.report);
  return r.report.integrity_ok() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MiniPC-32 toolchain, monitor runner and bench"};
  app.require_subcommand(1);

  std::string asm_in, asm_out;
  auto* a = app.add_subcommand("asm", "Assemble a .masm file into an image");
  a->add_option("input", asm_in, "source file")->required();
  a->add_option("-o,--output", asm_out, "image to write")->required();

  std::string dis_in;
  auto* d = app.add_subcommand("disasm", "List the sections of an image");
  d->add_option("image", dis_in)->required();

  RunOptions ro;
  auto* r = app.add_subcommand("run", "Boot an image under the monitor");
  r->add_option("image", ro.image)->required();
  r->add_option("--mode", ro.mode, "bare|lightweight|fullvirt (overrides the config)");
  r->add_option("--config", ro.config, "run config JSON");
  r->add_option("--gdb", ro.gdb_port, "serve the remote debug protocol on PORT");
  r->add_option("--ws", ro.ws_port, "serve the console bridge on PORT");
  r->add_flag("--trace", ro.trace, "print every retired instruction to stderr");
  r->add_option("--max-cycles", ro.max_cycles, "stop after this many cycles (no servers)");

  BenchOptions bo;
  auto* b = app.add_subcommand("bench", "Throughput/CPU-load sweep");
  b->add_option("--modes", bo.modes)->capture_default_str();
  b->add_option("--rates", bo.rates, "start:stop:step in Mbit/s")->capture_default_str();
  b->add_option("--total-mib", bo.total_mib)->capture_default_str();
  b->add_option("--segment-kib", bo.segment_kib)->capture_default_str();
  b->add_option("--config", bo.config, "run config JSON supplying the cost model");
  b->add_option("--out", bo.out, "CSV path (stdout if omitted)");

  CalibrateOptions co;
  auto* c = app.add_subcommand("calibrate", "Fit monitor costs to target rate ratios");
  c->add_option("--target-ratio-full", co.targets.ratio_full)->capture_default_str();
  c->add_option("--target-frac-bare", co.targets.frac_bare)->capture_default_str();
  c->add_option("--config", co.config, "base config for the non-searched costs");
  c->add_option("--out", co.out, "config JSON to write (stdout if omitted)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*a) return cmd_asm(asm_in, asm_out);
    if (*d) return cmd_disasm(dis_in);
    if (*r) return cmd_run(ro);
    if (*b) return cmd_bench(bo);
    if (*c) return cmd_calibrate(co);
  } catch (const std::exception& e) {
    std::cerr << "mpc: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
