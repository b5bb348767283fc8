#pragma once

// Shared synthetic model database and utility table, built in memory once per
// test binary.

#include "qpexo/pipeline.hpp"
#include "qpexo/synthetic.hpp"

#include <cstdint>
#include <vector>

namespace fixture {

inline constexpr std::uint64_t kSeed = 42;

inline std::vector<qpexo::MotionTrace> demos(const qpexo::SyntheticConfig& cfg = {}, std::uint64_t seed = kSeed) {
  std::vector<qpexo::MotionTrace> out;
  for (std::uint32_t c = 0; c < qpexo::kLiftClasses.size(); ++c) {
    const auto& label = qpexo::kLiftClasses[c];
    for (std::uint32_t k = 0; k < cfg.demos_for(label); ++k) {
      auto rng = qpexo::trace_rng(seed, 1, c, k);
      out.push_back(qpexo::generate_lift(label, rng, cfg, true));
    }
  }
  return out;
}

inline const qpexo::ModelDatabase& db() {
  static const qpexo::ModelDatabase d = qpexo::learn_database(demos(), {}, 0.5, 1e-6);
  return d;
}

inline std::vector<qpexo::HumanReference> references(const qpexo::SyntheticConfig& cfg = {}) {
  std::vector<qpexo::HumanReference> refs;
  for (const auto& label : qpexo::kLiftClasses) refs.push_back(qpexo::lift_reference(label, cfg));
  refs.push_back(qpexo::walking_reference(cfg));
  return refs;
}

inline const qpexo::UtilityTable& utilities() {
  static const qpexo::UtilityTable u = qpexo::build_utilities(references(), {}, qpexo::kLiftClasses);
  return u;
}

/// A window that replays the model mean over grid indices [first, first + 30),
/// stamped at 100 Hz.
inline qpexo::ObservationWindow mean_window(const qpexo::MotionModel& m, std::size_t first) {
  qpexo::ObservationWindow w;
  for (std::size_t i = 0; i < qpexo::kWindowSize; ++i) {
    w.obs.push_back(m.mean[first + i]);
    w.t.push_back(0.01 * static_cast<double>(i));
  }
  return w;
}

/// Model mean replayed as a 100 Hz trace: standing at the first grid point,
/// flexion over the grid in `flexion_s`, then holding the last point.
inline qpexo::MotionTrace mean_trace(const qpexo::MotionModel& m, double flexion_s = 1.0, double stand_s = 1.0,
                                     double hold_s = 0.5) {
  qpexo::MotionTrace tr;
  tr.label = m.name;
  const double total = stand_s + flexion_s + hold_s;
  for (int k = 0; k * 0.01 <= total + 1e-9; ++k) {
    const double t = k * 0.01;
    const double s = std::clamp((t - stand_s) / flexion_s, 0.0, 1.0);
    const double pos = s * static_cast<double>(m.grid_size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, m.grid_size() - 1);
    const double w = pos - static_cast<double>(lo);
    tr.samples.push_back({t, (1.0 - w) * m.mean[lo] + w * m.mean[hi], {}});
  }
  return tr;
}

}  // namespace fixture
