#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "minipc/bench.hpp"
#include "minipc/cost_model.hpp"

namespace minipc {

struct CalibrationTargets {
  double ratio_full = 5.4;  // max_rate(lightweight) / max_rate(fullvirt)
  double frac_bare = 0.26;  // max_rate(lightweight) / max_rate(bare)
};

struct CalibrationGrid {
  uint64_t world_switch_min = 200, world_switch_max = 10'000, world_switch_step = 100;
  uint64_t emulate_port_min = 100, emulate_port_max = 5'000, emulate_port_step = 100;
  uint64_t dma_min = 0, dma_max = 40, dma_step = 1;
  size_t max_verifications = 40;
};

struct CalibrationResult {
  bool ok = false;
  CostModel cost;
  uint32_t bare_max = 0;
  uint32_t target_lightweight = 0;
  uint32_t target_fullvirt = 0;
  double predicted_margin = 0;
  size_t verified_candidates = 0;
  BenchReport report;  // verification sweep for the chosen cost
  std::string log;
};

/// Searches (world_switch, emulate_port, dma_copy_per_byte) so that the bench
/// maxima reproduce the requested ratios on the swept rate grid. `base`
/// supplies the workload shape and every non-searched cost.
CalibrationResult calibrate(const CalibrationTargets& targets, const BenchConfig& base,
                            const CalibrationGrid& grid = {});

/// Config JSON (mode lightweight) carrying the calibrated cost and a record
/// of how it was found.
std::string calibration_json(const CalibrationTargets& targets, const CalibrationResult& result);

}  // namespace minipc
