#include "minipc/bench.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "minipc/workload.hpp"

namespace minipc {

namespace {

uint32_t parse_u32(std::string_view s, const char* what) {
  if (s.empty()) throw BenchError(std::string("empty ") + what);
  uint64_t v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') throw BenchError(std::string("bad ") + what + " '" + std::string(s) + "'");
    v = v * 10 + static_cast<uint64_t>(c - '0');
    if (v > 0xFFFFFFFFu) throw BenchError(std::string(what) + " out of range");
  }
  return static_cast<uint32_t>(v);
}

}  // namespace

std::vector<uint32_t> parse_rates(std::string_view range) {
  std::vector<std::string_view> parts;
  size_t pos = 0;
  while (true) {
    const size_t colon = range.find(':', pos);
    parts.push_back(range.substr(pos, colon == std::string_view::npos ? colon : colon - pos));
    if (colon == std::string_view::npos) break;
    pos = colon + 1;
  }
  if (parts.size() == 1) {
    const uint32_t r = parse_u32(parts[0], "rate");
    if (r == 0) throw BenchError("rates must be positive");
    return {r};
  }
  if (parts.size() != 3) throw BenchError("rates must be start:stop:step");
  const uint32_t start = parse_u32(parts[0], "rate start");
  const uint32_t stop = parse_u32(parts[1], "rate stop");
  const uint32_t step = parse_u32(parts[2], "rate step");
  if (start == 0 || step == 0 || stop < start) throw BenchError("rates must be positive and increasing");
  std::vector<uint32_t> out;
  for (uint64_t r = start; r <= stop; r += step) out.push_back(static_cast<uint32_t>(r));
  return out;
}

std::vector<MonitorMode> parse_modes(std::string_view list) {
  std::vector<MonitorMode> out;
  size_t pos = 0;
  while (pos <= list.size()) {
    const size_t comma = list.find(',', pos);
    const auto name = list.substr(pos, comma == std::string_view::npos ? comma : comma - pos);
    const auto m = parse_mode(name);
    if (!m) throw BenchError("unknown mode '" + std::string(name) + "'");
    out.push_back(*m);
    if (comma == std::string_view::npos) break;
    pos = comma + 1;
  }
  return out;
}

void BenchConfig::validate() const {
  if (modes.empty()) throw BenchError("no modes selected");
  for (size_t i = 0; i < rates_mbps.size(); ++i) {
    if (rates_mbps[i] == 0) throw BenchError("rates must be positive");
    if (i && rates_mbps[i] <= rates_mbps[i - 1]) throw BenchError("rates must be increasing");
  }
  if (total_bytes == 0 || total_bytes % kSectorBytes) throw BenchError("total bytes must be a positive multiple of 512");
  if (segment_bytes == 0 || segment_bytes % kSectorBytes) throw BenchError("segment bytes must be a positive multiple of 512");
  if (chunk_bytes == 0 || chunk_bytes % kSectorBytes) throw BenchError("chunk bytes must be a positive multiple of 512");
  if (segment_bytes + workload::kDatagramHeader > (14u << 20)) throw BenchError("segment does not fit the guest buffer");
  if (bytes_per_tick < chunk_bytes) throw BenchError("bytes per tick must cover at least one chunk");
  if (repetitions == 0) throw BenchError("repetitions must be at least 1");
}

double measure_load(uint64_t cycles_total, uint64_t cycles_idle) {
  if (cycles_total == 0) throw BenchError("load undefined for a zero-cycle run");
  return 100.0 * static_cast<double>(cycles_total - cycles_idle) / static_cast<double>(cycles_total);
}

uint32_t tick_cycles_for(uint32_t rate_mbps, uint32_t bytes_per_tick, uint64_t clock_hz) {
  if (rate_mbps == 0) throw BenchError("rates must be positive");
  // bytes * 8 bits / (rate * 10^6 bit/s) seconds, times clock_hz.
  const unsigned __int128 num = static_cast<unsigned __int128>(bytes_per_tick) * 8u * clock_hz;
  const unsigned __int128 den = static_cast<unsigned __int128>(rate_mbps) * 1'000'000u;
  const auto tick = static_cast<uint64_t>((num + den / 2) / den);
  if (tick == 0 || tick > 0xFFFFFFFFu) throw BenchError("rate does not give a usable tick interval");
  return static_cast<uint32_t>(tick);
}

namespace {

Sample run_once(MonitorMode mode, uint32_t rate_mbps, const BenchConfig& cfg) {
  workload::XferParams p;
  p.bytes_per_tick = cfg.bytes_per_tick;
  p.total_bytes = cfg.total_bytes;
  p.segment_bytes = cfg.segment_bytes;
  p.tick_cycles = tick_cycles_for(rate_mbps, cfg.bytes_per_tick, cfg.cost.clock_hz);
  p.chunk_bytes = cfg.chunk_bytes;

  Machine m;
  Monitor mon(m, mode, cfg.cost);
  workload::seed_disks(m, p);
  workload::boot(m, workload::xfer_image(), p);

  const uint64_t ticks = (uint64_t{p.total_bytes} + p.bytes_per_tick - 1) / p.bytes_per_tick;
  const uint64_t expected = ticks * p.tick_cycles;
  // Generous enough that even a saturated mode finishes, so every sample
  // carries a full transfer to check.
  const uint64_t timeout = 2 * (expected + uint64_t{p.total_bytes} * 64);

  const ExitStats st = mon.guest_loop(
      [](const Disposition& d) { return d.kind != Disposition::Kind::ResumeGuest; }, timeout);

  Sample s;
  s.mode = mode;
  s.target_mbps = rate_mbps;
  s.stats = st;
  s.exits_io = st.trapped_in + st.trapped_out;
  s.exits_irq = st.irq_intercepts;
  s.cycles_total = m.cycles_total();
  s.cycles_idle = m.cycles_idle();
  s.cycles_monitor = m.cycles_monitor();
  s.guest_busy = s.cycles_total - s.cycles_idle - s.cycles_monitor;
  // The pacing clock starts when the guest enables the timer. On time means
  // within 5% of the paced duration plus one tick of scheduling slack.
  const uint64_t t0 = m.timer().started_at();
  s.deadline = (t0 == kNever ? 0 : t0) + expected + expected / 20 + p.tick_cycles;
  s.cpu_load_pct = measure_load(s.cycles_total, s.cycles_idle);

  if (mon.run_state() == Monitor::RunState::Frozen) {
    s.error = std::string("guest stopped: ") + stop_kind_name(mon.last_stop().kind);
  } else if (mon.run_state() != Monitor::RunState::Shutdown) {
    s.error = "timed out after " + std::to_string(timeout) + " cycles";
  } else if (m.read_phys32(workload::kFaultVector) != workload::kNoFault) {
    s.error = "guest fault vector " + std::to_string(m.read_phys32(workload::kFaultVector));
  } else if (m.read_phys32(workload::kXferError) != 0) {
    s.error = "guest reported a device error";
  } else {
    s.completed = true;
  }

  const auto r = workload::verify_transfer(m, p);
  s.integrity_ok = r.ok;
  s.segments = r.segments;
  if (!r.ok && s.error.empty()) s.error = "integrity: " + r.error;

  if (s.completed && t0 != kNever && s.cycles_total > t0) {
    const double seconds = static_cast<double>(s.cycles_total - t0) / static_cast<double>(cfg.cost.clock_hz);
    s.achieved_mbps = (8.0 * p.total_bytes / seconds) / 1e6;
  }
  return s;
}

bool same_measurement(const Sample& a, const Sample& b) {
  return a.cycles_total == b.cycles_total && a.cycles_idle == b.cycles_idle &&
         a.cycles_monitor == b.cycles_monitor && a.exits_io == b.exits_io &&
         a.exits_irq == b.exits_irq && a.integrity_ok == b.integrity_ok;
}

}  // namespace

Sample run_sample(MonitorMode mode, uint32_t rate_mbps, const BenchConfig& cfg) {
  Sample first = run_once(mode, rate_mbps, cfg);
  for (unsigned i = 1; i < cfg.repetitions; ++i) {
    if (!same_measurement(first, run_once(mode, rate_mbps, cfg))) {
      first.error = "repetition " + std::to_string(i) + " differs";
      first.completed = false;
    }
  }
  return first;
}

bool BenchReport::integrity_ok() const {
  for (const auto& s : samples) {
    if (!s.integrity_ok) return false;
  }
  return true;
}

BenchReport summarize(std::vector<Sample> samples) {
  BenchReport r;
  r.samples = std::move(samples);
  for (const auto& s : r.samples) {
    auto& best = r.max_rate[s.mode];
    if (s.sustainable() && (!best || s.target_mbps > *best)) best = s.target_mbps;
  }
  const auto rate = [&](MonitorMode m) -> std::optional<uint32_t> {
    auto it = r.max_rate.find(m);
    return it == r.max_rate.end() ? std::nullopt : it->second;
  };
  const auto lw = rate(MonitorMode::Lightweight);
  const auto fv = rate(MonitorMode::FullVirt);
  const auto bare = rate(MonitorMode::Bare);
  if (lw && fv) r.ratio_lw_over_fv = static_cast<double>(*lw) / *fv;
  if (lw && bare) r.ratio_lw_over_bare = static_cast<double>(*lw) / *bare;
  return r;
}

BenchReport run_sweep(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<Sample> samples;
  samples.reserve(cfg.modes.size() * cfg.rates_mbps.size());
  for (MonitorMode mode : cfg.modes) {
    for (uint32_t rate : cfg.rates_mbps) samples.push_back(run_sample(mode, rate, cfg));
  }
  return summarize(std::move(samples));
}

void emit_csv(const BenchReport& report, std::ostream& out) {
  out << "mode,target_mbps,achieved_mbps,cpu_load_pct,exits_io,exits_irq,cycles_total,"
         "cycles_idle,cycles_monitor\n";
  char buf[256];
  for (const auto& s : report.samples) {
    std::snprintf(buf, sizeof buf, "%s,%u,%.3f,%.3f,%llu,%llu,%llu,%llu,%llu\n", mode_name(s.mode),
                  s.target_mbps, s.achieved_mbps, s.cpu_load_pct,
                  static_cast<unsigned long long>(s.exits_io),
                  static_cast<unsigned long long>(s.exits_irq),
                  static_cast<unsigned long long>(s.cycles_total),
                  static_cast<unsigned long long>(s.cycles_idle),
                  static_cast<unsigned long long>(s.cycles_monitor));
    out << buf;
  }
}

void emit_csv(const BenchReport& report, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw BenchError("cannot write " + path.string());
  emit_csv(report, f);
  if (!f) throw BenchError("write failed for " + path.string());
}

std::string format_summary(const BenchReport& report) {
  std::ostringstream os;
  for (const auto& [mode, rate] : report.max_rate) {
    os << "max sustainable " << mode_name(mode) << ": ";
    if (rate) {
      os << *rate << " Mbit/s\n";
    } else {
      os << "none\n";
    }
  }
  char buf[96];
  if (report.ratio_lw_over_fv) {
    std::snprintf(buf, sizeof buf, "lightweight/fullvirt: %.3f\n", *report.ratio_lw_over_fv);
    os << buf;
  }
  if (report.ratio_lw_over_bare) {
    std::snprintf(buf, sizeof buf, "lightweight/bare: %.3f\n", *report.ratio_lw_over_bare);
    os << buf;
  }
  for (const auto& s : report.samples) {
    if (!s.error.empty()) os << mode_name(s.mode) << " @" << s.target_mbps << ": " << s.error << "\n";
  }
  return os.str();
}

}  // namespace minipc
