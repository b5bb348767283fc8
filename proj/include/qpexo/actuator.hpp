#pragma once

// Clutched elastic hip actuator: ratchet lock, automatic release, and the
// spring torque as a function of deflection.

#include "qpexo/core.hpp"
#include "qpexo/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

namespace qpexo {

/// Tabulated torque curve, linear between points, held constant past the last.
struct TorqueTable {
  std::vector<double> alpha;  // rad, strictly increasing
  std::vector<double> tau;    // N·m

  void validate() const {
    if (alpha.size() != tau.size() || alpha.size() < 2) throw ConfigError("torque table needs at least 2 points");
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      if (!std::isfinite(alpha[i]) || !std::isfinite(tau[i])) throw ConfigError("torque table has non-finite entries");
      if (i > 0 && !(alpha[i] > alpha[i - 1])) throw ConfigError("torque table alpha grid must be strictly increasing");
    }
  }

  double operator()(double a) const {
    if (a <= alpha.front()) return tau.front();
    if (a >= alpha.back()) return tau.back();
    auto it = std::upper_bound(alpha.begin(), alpha.end(), a);
    const auto hi = static_cast<std::size_t>(it - alpha.begin());
    const double w = (a - alpha[hi - 1]) / (alpha[hi] - alpha[hi - 1]);
    return tau[hi - 1] + w * (tau[hi] - tau[hi - 1]);
  }
};

/// `alpha_rad,tau_nm` rows with a header line.
inline TorqueTable parse_torque_table(std::string_view text) {
  TorqueTable table;
  auto rows = io::lines(text);
  if (rows.empty() || io::trim(rows.front()) != "alpha_rad,tau_nm") throw ParseError("torque table header must be alpha_rad,tau_nm");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (io::trim(rows[r]).empty()) continue;
    auto f = io::split(rows[r], ',');
    double a = 0, t = 0;
    if (f.size() != 2 || !io::parse_double(f[0], a) || !io::parse_double(f[1], t))
      throw ParseError("malformed torque table row @line " + std::to_string(r));
    table.alpha.push_back(a);
    table.tau.push_back(t);
  }
  table.validate();
  return table;
}

inline TorqueTable load_torque_table(const std::filesystem::path& path) { return parse_torque_table(io::read_file(path)); }

struct ActuatorConfig {
  double lever_mm = 10.0;            // B
  double roller_distance_mm = 30.0;  // C
  double disk_radius_mm = 7.5;       // R, not used by the closed-form law
  double stiffness_n_per_mm = 67.2;  // two 33.6 N/mm springs in parallel
  double max_compression_mm = 22.0;
  double precompression_pct = 50.0;
  int teeth = 40;
  std::optional<TorqueTable> table;

  void validate() const {
    if (!(lever_mm > 0 && roller_distance_mm > 0 && disk_radius_mm > 0 && max_compression_mm > 0))
      throw ConfigError("actuator lengths must be positive");
    if (!(stiffness_n_per_mm >= 0)) throw ConfigError("actuator stiffness must be nonnegative");
    if (!(precompression_pct >= 0 && precompression_pct <= 100)) throw ConfigError("precompression_pct must lie in [0, 100]");
    if (teeth < 1) throw ConfigError("ratchet needs at least one tooth");
    if (table) table->validate();
  }

  double tooth_pitch() const { return 2.0 * kPi / teeth; }
};

/// Spring torque (N·m) at deflection alpha; zero for alpha <= 0.
inline double torque(double alpha, const ActuatorConfig& cfg) {
  if (!(alpha > 0.0)) return 0.0;
  if (cfg.table) return (*cfg.table)(alpha);
  const double B = cfg.lever_mm, C = cfg.roller_distance_mm;
  const double gap = std::abs(C - B);
  const double p = cfg.precompression_pct / 100.0 * cfg.max_compression_mm + gap;
  const double len = std::sqrt(B * B + C * C - 2.0 * B * C * std::cos(alpha));
  const double tau_nmm = cfg.stiffness_n_per_mm * B * C * std::sin(alpha) * (1.0 + (p - gap) / len);
  return tau_nmm / 1000.0;
}

/// Highest tooth position not ahead of theta.
inline double quantize_lock_angle(double theta, int teeth) {
  if (teeth < 1) throw ConfigError("ratchet needs at least one tooth");
  const double pitch = 2.0 * kPi / teeth;
  double k = std::floor(theta / pitch);
  // The division may round just below an integer for an angle sitting on a tooth.
  if ((k + 1.0) * pitch <= theta) k += 1.0;
  return k * pitch;
}

struct ActuatorState {
  bool locked = false;
  double theta_lock = 0.0;
  double alpha = 0.0;
  double tau_exo = 0.0;
};

/// Advances one side by one tick. Locking is a no-op while locked and there is
/// no unlock command: the ratchet releases itself once theta drops below the
/// lock angle.
inline ActuatorState step(const ActuatorState& state, double theta, bool lock_cmd, const ActuatorConfig& cfg) {
  ActuatorState next = state;
  if (!next.locked && lock_cmd) {
    next.locked = true;
    next.theta_lock = quantize_lock_angle(theta, cfg.teeth);
  }
  if (next.locked && theta - next.theta_lock < 0.0) {
    next.locked = false;
    next.theta_lock = 0.0;
  }
  if (next.locked) {
    next.alpha = theta - next.theta_lock;
    next.tau_exo = torque(next.alpha, cfg);
  } else {
    next.alpha = 0.0;
    next.tau_exo = 0.0;
  }
  return next;
}

}  // namespace qpexo
