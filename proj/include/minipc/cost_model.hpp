#pragma once

#include <cstdint>

namespace minipc {

/// Cycle charges. The VMM-specific defaults are the values written by
/// `mpc calibrate` into config/calibrated.json; keep the two in sync.
struct CostModel {
  uint64_t cycles_per_instr = 1;
  uint64_t world_switch = 7600;
  uint64_t emulate_port = 300;
  uint64_t dma_copy_per_byte = 0;
  uint64_t clock_hz = 100'000'000;
  uint64_t disk_cycles_per_byte = 0;
  uint64_t nic_cycles_per_byte = 0;

  friend bool operator==(const CostModel&, const CostModel&) = default;
};

}  // namespace minipc
