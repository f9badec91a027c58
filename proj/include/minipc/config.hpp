#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>

#include "minipc/cost_model.hpp"
#include "minipc/monitor.hpp"

namespace minipc {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run configuration as read from JSON:
///   {"mode": "lightweight",
///    "cost": {"world_switch": N, "emulate_port": N, "dma_copy_per_byte": N,
///             "clock_hz": N, "disk_cycles_per_byte": N, "nic_cycles_per_byte": N,
///             "cycles_per_instr": N},
///    "mem_mib": 16}
/// Every field is optional; missing ones keep their defaults.
struct RunConfig {
  MonitorMode mode = MonitorMode::Lightweight;
  CostModel cost;
  uint32_t mem_mib = 16;
};

RunConfig parse_config(std::string_view json_text);
RunConfig load_config_file(const std::filesystem::path& path);
std::string config_to_json(const RunConfig& cfg);

}  // namespace minipc
