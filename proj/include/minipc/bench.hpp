#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "minipc/cost_model.hpp"
#include "minipc/monitor.hpp"

namespace minipc {

class BenchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// "start:stop:step" in Mbit/s, inclusive of stop when it lands on the grid.
std::vector<uint32_t> parse_rates(std::string_view range);
std::vector<MonitorMode> parse_modes(std::string_view list);

struct BenchConfig {
  std::vector<MonitorMode> modes{MonitorMode::Bare, MonitorMode::Lightweight,
                                 MonitorMode::FullVirt};
  std::vector<uint32_t> rates_mbps = parse_rates("50:1000:50");
  uint32_t total_bytes = 2u << 20;
  uint32_t segment_bytes = 1u << 20;
  uint32_t bytes_per_tick = 8192;
  uint32_t chunk_bytes = 4096;
  CostModel cost;
  unsigned repetitions = 1;

  void validate() const;
};

struct Sample {
  MonitorMode mode = MonitorMode::Bare;
  uint32_t target_mbps = 0;
  double achieved_mbps = 0;
  double cpu_load_pct = 0;
  uint64_t exits_io = 0;
  uint64_t exits_irq = 0;
  uint64_t cycles_total = 0;
  uint64_t cycles_idle = 0;
  uint64_t cycles_monitor = 0;
  uint64_t guest_busy = 0;  // cycles_total - cycles_idle - cycles_monitor
  uint64_t deadline = 0;    // last cycle that still counts as on time
  bool completed = false;
  bool integrity_ok = false;
  size_t segments = 0;
  std::string error;
  ExitStats stats;

  bool on_time() const { return completed && cycles_total <= deadline; }
  bool sustainable() const { return on_time() && integrity_ok && cpu_load_pct < 99.0; }
};

struct BenchReport {
  std::vector<Sample> samples;
  std::map<MonitorMode, std::optional<uint32_t>> max_rate;
  std::optional<double> ratio_lw_over_fv;
  std::optional<double> ratio_lw_over_bare;

  bool integrity_ok() const;
};

/// 100 * (total - idle) / total. Throws BenchError when total is zero.
double measure_load(uint64_t cycles_total, uint64_t cycles_idle);

/// Timer interval that releases `bytes_per_tick` at `rate_mbps`, rounded to
/// the nearest cycle.
uint32_t tick_cycles_for(uint32_t rate_mbps, uint32_t bytes_per_tick, uint64_t clock_hz);

Sample run_sample(MonitorMode mode, uint32_t rate_mbps, const BenchConfig& cfg);
BenchReport summarize(std::vector<Sample> samples);
BenchReport run_sweep(const BenchConfig& cfg);

void emit_csv(const BenchReport& report, std::ostream& out);
void emit_csv(const BenchReport& report, const std::filesystem::path& path);
std::string format_summary(const BenchReport& report);

}  // namespace minipc
