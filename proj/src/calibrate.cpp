#include "minipc/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "minipc/config.hpp"

namespace minipc {

namespace {

// Per-sample event counts from a zero-cost run. Predicted utilisation under
// a cost triple is (busy + ws*switches + ep*ports + d*bytes) / cycles.
struct Counts {
  uint32_t rate = 0;
  double busy = 0;
  double switches = 0;
  double ports = 0;
  double dma_bytes = 0;
  double cycles = 0;

  double utilisation(double ws, double ep, double d) const {
    return (busy + ws * switches + ep * ports + d * dma_bytes) / cycles;
  }
};

Counts counts_of(const Sample& s) {
  Counts c;
  c.rate = s.target_mbps;
  c.busy = static_cast<double>(s.cycles_total - s.cycles_idle);
  c.switches = static_cast<double>(s.stats.world_switches);
  c.ports = static_cast<double>(s.stats.emulated_port_accesses);
  c.dma_bytes = static_cast<double>(s.stats.emulated_dma_bytes);
  c.cycles = static_cast<double>(s.cycles_total);
  return c;
}

uint32_t closest_rate(const std::vector<uint32_t>& rates, double want) {
  uint32_t best = rates.front();
  double best_err = std::numeric_limits<double>::infinity();
  for (uint32_t r : rates) {
    const double err = std::abs(std::log(r / want));
    if (err < best_err - 1e-12) {
      best = r;
      best_err = err;
    }
  }
  return best;
}

const Counts* find(const std::vector<Counts>& v, uint32_t rate) {
  for (const auto& c : v) {
    if (c.rate == rate) return &c;
  }
  return nullptr;
}

const Counts* next_above(const std::vector<Counts>& v, uint32_t rate) {
  const Counts* best = nullptr;
  for (const auto& c : v) {
    if (c.rate > rate && (!best || c.rate < best->rate)) best = &c;
  }
  return best;
}

struct Candidate {
  uint64_t ws, ep, d;
  std::vector<double> margins;  // ascending; margins[0] is the binding one
};

}  // namespace

CalibrationResult calibrate(const CalibrationTargets& targets, const BenchConfig& base,
                            const CalibrationGrid& grid) {
  base.validate();
  if (targets.ratio_full <= 0 || targets.frac_bare <= 0) {
    throw BenchError("calibration targets must be positive");
  }
  CalibrationResult res;
  std::ostringstream log;

  BenchConfig zero = base;
  zero.modes = {MonitorMode::Bare, MonitorMode::Lightweight, MonitorMode::FullVirt};
  zero.cost.world_switch = 0;
  zero.cost.emulate_port = 0;
  zero.cost.dma_copy_per_byte = 0;
  const BenchReport probe = run_sweep(zero);
  if (!probe.integrity_ok()) throw BenchError("zero-cost probe sweep failed its integrity check");

  std::vector<Sample> bare_samples;
  std::vector<Counts> lw, fv;
  for (const auto& s : probe.samples) {
    if (s.mode == MonitorMode::Bare) bare_samples.push_back(s);
    if (s.mode == MonitorMode::Lightweight) lw.push_back(counts_of(s));
    if (s.mode == MonitorMode::FullVirt) fv.push_back(counts_of(s));
  }
  const auto bare_max = probe.max_rate.at(MonitorMode::Bare);
  if (!bare_max) throw BenchError("bare mode sustains no swept rate");
  res.bare_max = *bare_max;
  res.target_lightweight = closest_rate(base.rates_mbps, targets.frac_bare * *bare_max);
  res.target_fullvirt = closest_rate(base.rates_mbps, res.target_lightweight / targets.ratio_full);
  log << "bare max " << res.bare_max << ", aiming for lightweight " << res.target_lightweight
      << " and fullvirt " << res.target_fullvirt << "\n";

  const Counts* lw_at = find(lw, res.target_lightweight);
  const Counts* lw_over = next_above(lw, res.target_lightweight);
  const Counts* fv_at = find(fv, res.target_fullvirt);
  const Counts* fv_over = next_above(fv, res.target_fullvirt);
  if (!lw_at || !fv_at) throw BenchError("probe sweep is missing a target rate");

  std::vector<Candidate> cands;
  for (uint64_t ws = grid.world_switch_min; ws <= grid.world_switch_max; ws += grid.world_switch_step) {
    for (uint64_t ep = grid.emulate_port_min; ep <= grid.emulate_port_max; ep += grid.emulate_port_step) {
      for (uint64_t d = grid.dma_min; d <= grid.dma_max; d += grid.dma_step) {
        const double w = static_cast<double>(ws), e = static_cast<double>(ep),
                     b = static_cast<double>(d);
        // Log-distance of each boundary sample from full utilisation.
        std::vector<double> m{-std::log(lw_at->utilisation(w, e, b)),
                              -std::log(fv_at->utilisation(w, e, b))};
        if (lw_over) m.push_back(std::log(lw_over->utilisation(w, e, b)));
        if (fv_over) m.push_back(std::log(fv_over->utilisation(w, e, b)));
        std::sort(m.begin(), m.end());
        if (m.front() > 0) cands.push_back({ws, ep, d, std::move(m)});
        if (grid.dma_step == 0) break;
      }
      if (grid.emulate_port_step == 0) break;
    }
    if (grid.world_switch_step == 0) break;
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    // Widest binding margin first, then the widest of the rest.
    if (a.margins != b.margins) return a.margins > b.margins;
    if (a.ws != b.ws) return a.ws < b.ws;
    if (a.ep != b.ep) return a.ep < b.ep;
    return a.d < b.d;
  });
  log << cands.size() << " candidates with positive predicted margin\n";

  BenchConfig verify = base;
  verify.modes = {MonitorMode::Lightweight, MonitorMode::FullVirt};
  double best_err = std::numeric_limits<double>::infinity();
  for (const auto& c : cands) {
    if (res.verified_candidates >= grid.max_verifications) break;
    ++res.verified_candidates;
    verify.cost.world_switch = c.ws;
    verify.cost.emulate_port = c.ep;
    verify.cost.dma_copy_per_byte = c.d;
    BenchReport r = run_sweep(verify);
    std::vector<Sample> all = bare_samples;
    all.insert(all.end(), r.samples.begin(), r.samples.end());
    r = summarize(std::move(all));

    const auto lw_max = r.max_rate[MonitorMode::Lightweight];
    const auto fv_max = r.max_rate[MonitorMode::FullVirt];
    log << "ws=" << c.ws << " ep=" << c.ep << " dma=" << c.d << " margin=" << c.margins.front()
        << " -> lightweight " << (lw_max ? std::to_string(*lw_max) : "none") << ", fullvirt "
        << (fv_max ? std::to_string(*fv_max) : "none") << "\n";
    if (!r.integrity_ok() || !r.ratio_lw_over_fv || !r.ratio_lw_over_bare) continue;
    const double err = std::abs(std::log(*r.ratio_lw_over_fv / targets.ratio_full)) +
                       std::abs(std::log(*r.ratio_lw_over_bare / targets.frac_bare));
    if (err < best_err) {
      best_err = err;
      res.cost = verify.cost;
      res.predicted_margin = c.margins.front();
      res.report = r;
      res.ok = true;
    }
    if (lw_max == res.target_lightweight && fv_max == res.target_fullvirt) break;
  }
  if (!res.ok) log << "no candidate verified\n";
  res.log = log.str();
  return res;
}

std::string calibration_json(const CalibrationTargets& targets, const CalibrationResult& result) {
  RunConfig cfg;
  cfg.mode = MonitorMode::Lightweight;
  cfg.cost = result.cost;
  auto j = nlohmann::json::parse(config_to_json(cfg));
  nlohmann::json cal;
  cal["target_ratio_full"] = targets.ratio_full;
  cal["target_frac_bare"] = targets.frac_bare;
  cal["max_rate_bare"] = result.bare_max;
  const auto rate_or_null = [&](MonitorMode m) -> nlohmann::json {
    auto it = result.report.max_rate.find(m);
    if (it == result.report.max_rate.end() || !it->second) return nullptr;
    return *it->second;
  };
  cal["max_rate_lightweight"] = rate_or_null(MonitorMode::Lightweight);
  cal["max_rate_fullvirt"] = rate_or_null(MonitorMode::FullVirt);
  cal["ratio_lightweight_over_fullvirt"] =
      result.report.ratio_lw_over_fv ? nlohmann::json(*result.report.ratio_lw_over_fv) : nullptr;
  cal["ratio_lightweight_over_bare"] =
      result.report.ratio_lw_over_bare ? nlohmann::json(*result.report.ratio_lw_over_bare) : nullptr;
  cal["candidates_verified"] = result.verified_candidates;
  cal["verified"] = result.ok;
  j["calibration"] = cal;
  return j.dump(2) + "\n";
}

}  // namespace minipc
