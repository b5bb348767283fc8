#pragma once

// Parameterized synthetic hip-angle traces (lifts, walking, stairs) and the
// matching human reference torques, standing in for recorded demonstrations.

#include "qpexo/core.hpp"
#include "qpexo/trace.hpp"
#include "qpexo/utility.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace qpexo {

inline const std::vector<std::string> kLiftClasses{"squat", "stoop_left", "stoop_right"};
inline const std::string kWalkingClass = "walking";
inline const std::string kStairClass = "stairs";

struct SyntheticConfig {
  double rate_hz = 100.0;
  std::size_t squat_demos = 60;
  std::size_t stoop_demos = 30;  // per side
  std::size_t trials_per_class = 10;
  std::size_t walking_trials = 10;
  std::size_t stair_trials = 10;

  // lifts: q = rest + A (1 - cos(2 pi t / T)) / 2 over one period
  double lift_period_s = 2.0;
  double period_sigma_s = 0.1;
  double stand_before_s = 1.0;
  double stand_after_s = 0.8;
  double rest_angle_rad = 0.05;
  double rest_sigma_rad = 0.01;         // training demos, pooled over donnings
  double trial_rest_sigma_rad = 0.003;  // evaluation traces, one session
  double squat_amplitude_rad = 1.6;
  double stoop_supporting_rad = 1.75;
  double stoop_non_supporting_rad = 1.5;
  double amplitude_sigma_rel = 0.015;      // common to both sides
  double asymmetry_sigma_rel = 0.01;       // per side, stoops
  double squat_asymmetry_sigma_rel = 0.003;
  double noise_sigma_rad = 0.0004;
  bool quantize_counts = true;

  // walking: q = rest + offset +- amplitude sin(2 pi f t), sides in antiphase
  double walking_duration_s = 6.0;
  double walking_offset_rad = 0.17;
  double walking_amplitude_rad = 0.35;
  double walking_frequency_hz = 0.9;
  double walking_ramp_s = 0.5;

  // stairs: alternating partial stoop-like flexions along the nominal profile
  std::size_t stair_steps = 4;
  double stair_progress = 0.3;
  double stair_progress_rate = 0.4;  // progress units per second
  double stair_pause_s = 0.3;

  // human reference torques, peak N·m
  double squat_torque_nm = 90.0;
  double stoop_torque_nm = 120.0;
  double non_supporting_fraction = 0.02;
  double walking_torque_nm = 15.0;
  double walking_torque_phase = 0.3;

  std::size_t demos_for(const std::string& label) const { return label == "squat" ? squat_demos : stoop_demos; }

  void validate() const {
    if (!(rate_hz > 0 && lift_period_s > 0 && stand_before_s >= 0 && stand_after_s >= 0))
      throw ConfigError("synthetic timing parameters must be positive");
    if (!(amplitude_sigma_rel >= 0 && asymmetry_sigma_rel >= 0 && squat_asymmetry_sigma_rel >= 0 && noise_sigma_rad >= 0 &&
          rest_sigma_rad >= 0 && trial_rest_sigma_rad >= 0 && period_sigma_s >= 0))
      throw ConfigError("synthetic noise levels must be nonnegative");
    if (squat_demos < 2 || stoop_demos < 2) throw ConfigError("training needs at least 2 demos per class");
    if (!(stair_progress > 0 && stair_progress <= 1 && stair_progress_rate > 0)) throw ConfigError("stair profile is invalid");
    if (!(walking_frequency_hz > 0 && walking_duration_s > 0)) throw ConfigError("walking profile is invalid");
  }
};

/// Nominal per-side amplitude of a lifting class.
inline Vec2 class_amplitude(const std::string& label, const SyntheticConfig& cfg) {
  if (label == "squat") return {cfg.squat_amplitude_rad, cfg.squat_amplitude_rad};
  if (label == "stoop_left") return {cfg.stoop_supporting_rad, cfg.stoop_non_supporting_rad};
  if (label == "stoop_right") return {cfg.stoop_non_supporting_rad, cfg.stoop_supporting_rad};
  throw ValidationError("unknown lifting class '" + label + "'");
}

/// Flexion profile in [0, 1] over the flexion half.
inline double flexion_shape(double s) { return 0.5 * (1.0 - std::cos(kPi * s)); }

/// Independent stream per (seed, kind, class, index).
inline std::mt19937_64 trace_rng(std::uint64_t seed, std::uint32_t kind, std::uint32_t cls, std::uint32_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), kind, cls, index};
  return std::mt19937_64(seq);
}

namespace detail {

inline double quantize(double q, bool on) {
  if (!on) return q;
  const double step = counts_to_rad(1.0);
  return std::round(q / step) * step;
}

template <typename F>
MotionTrace sample_trace(double duration, const SyntheticConfig& cfg, std::mt19937_64& rng, const std::string& label, F&& q_of_t) {
  std::normal_distribution<double> noise(0.0, 1.0);
  MotionTrace trace;
  trace.rate_hz = cfg.rate_hz;
  trace.label = label;
  const auto count = static_cast<std::size_t>(std::floor(duration * cfg.rate_hz + 1e-9)) + 1;
  trace.samples.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const double t = static_cast<double>(k) / cfg.rate_hz;
    Vec2 q = q_of_t(t);
    q.x() = detail::quantize(q.x() + cfg.noise_sigma_rad * noise(rng), cfg.quantize_counts);
    q.y() = detail::quantize(q.y() + cfg.noise_sigma_rad * noise(rng), cfg.quantize_counts);
    trace.samples.push_back({t, q, {}});
  }
  return trace;
}

}  // namespace detail

/// One full lift (flexion and extension) between standing phases. Demos and
/// evaluation trials differ only in the spread of the resting pose.
inline MotionTrace generate_lift(const std::string& label, std::mt19937_64& rng, const SyntheticConfig& cfg,
                                 bool demo = false) {
  const double rest_sigma = demo ? cfg.rest_sigma_rad : cfg.trial_rest_sigma_rad;
  std::normal_distribution<double> z(0.0, 1.0);
  const Vec2 nominal = class_amplitude(label, cfg);
  const double asym = label == "squat" ? cfg.squat_asymmetry_sigma_rel : cfg.asymmetry_sigma_rel;
  const double common = cfg.amplitude_sigma_rel * z(rng);
  const Vec2 amp(nominal.x() * (1.0 + common + asym * z(rng)), nominal.y() * (1.0 + common + asym * z(rng)));
  const Vec2 rest(cfg.rest_angle_rad + rest_sigma * z(rng), cfg.rest_angle_rad + rest_sigma * z(rng));
  const double period = std::max(0.5 * cfg.lift_period_s, cfg.lift_period_s + cfg.period_sigma_s * z(rng));
  const double t0 = cfg.stand_before_s;
  return detail::sample_trace(t0 + period + cfg.stand_after_s, cfg, rng, label, [&](double t) -> Vec2 {
    if (t <= t0 || t >= t0 + period) return rest;
    const double shape = 0.5 * (1.0 - std::cos(2.0 * kPi * (t - t0) / period));
    return rest + amp * shape;
  });
}

/// Level walking after a standing phase; hips swing in antiphase.
inline MotionTrace generate_walking(std::mt19937_64& rng, const SyntheticConfig& cfg) {
  std::normal_distribution<double> z(0.0, 1.0);
  const Vec2 rest(cfg.rest_angle_rad + cfg.trial_rest_sigma_rad * z(rng), cfg.rest_angle_rad + cfg.trial_rest_sigma_rad * z(rng));
  const double f = cfg.walking_frequency_hz * (1.0 + 0.05 * z(rng));
  const double amp = cfg.walking_amplitude_rad * (1.0 + cfg.amplitude_sigma_rel * z(rng));
  const double t0 = cfg.stand_before_s;
  return detail::sample_trace(t0 + cfg.walking_duration_s, cfg, rng, kWalkingClass, [&](double t) -> Vec2 {
    if (t <= t0) return rest;
    const double ramp = cfg.walking_ramp_s > 0 ? std::min(1.0, (t - t0) / cfg.walking_ramp_s) : 1.0;
    const double swing = amp * std::sin(2.0 * kPi * f * (t - t0));
    return rest + ramp * Vec2(cfg.walking_offset_rad + swing, cfg.walking_offset_rad - swing);
  });
}

/// Stair steps that trace the nominal stoop profile up to a partial progress
/// and back, alternating the supporting side. Flexion stays slow enough that
/// hip velocities remain under 1 rad/s.
inline MotionTrace generate_stairs(std::mt19937_64& rng, const SyntheticConfig& cfg) {
  std::normal_distribution<double> z(0.0, 1.0);
  // Rest offsets stay within one standard deviation so each step lies inside the stoop models' envelope.
  auto offset = [&] { return cfg.trial_rest_sigma_rad * std::clamp(z(rng), -1.0, 1.0); };
  const Vec2 rest(cfg.rest_angle_rad + offset(), cfg.rest_angle_rad + offset());
  const double rise = cfg.stair_progress / cfg.stair_progress_rate;
  const double step_len = 2.0 * rise + cfg.stair_pause_s;
  const double t0 = cfg.stand_before_s;
  const Vec2 amp_left = class_amplitude("stoop_left", cfg);
  const Vec2 amp_right = class_amplitude("stoop_right", cfg);
  const double total = t0 + static_cast<double>(cfg.stair_steps) * step_len + cfg.stand_after_s;
  return detail::sample_trace(total, cfg, rng, kStairClass, [&](double t) -> Vec2 {
    if (t <= t0) return rest;
    const double local_all = t - t0;
    const auto step = static_cast<std::size_t>(std::floor(local_all / step_len));
    if (step >= cfg.stair_steps) return rest;
    const double local = local_all - static_cast<double>(step) * step_len;
    double s = 0.0;
    if (local < rise)
      s = local * cfg.stair_progress_rate;
    else if (local < 2.0 * rise)
      s = cfg.stair_progress - (local - rise) * cfg.stair_progress_rate;
    const Vec2& amp = step % 2 == 0 ? amp_left : amp_right;
    return rest + amp * flexion_shape(s);
  });
}

// ---------------------------------------------------------------------------
// Human references on the progress grid

inline HumanReference lift_reference(const std::string& label, const SyntheticConfig& cfg) {
  const Vec2 amp = class_amplitude(label, cfg);
  HumanReference ref;
  ref.name = label;
  double peak_l = cfg.squat_torque_nm, peak_r = cfg.squat_torque_nm;
  ref.left.role = ref.right.role = Role::symmetric;
  if (label == "stoop_left") {
    peak_l = cfg.stoop_torque_nm;
    peak_r = -cfg.non_supporting_fraction * cfg.stoop_torque_nm;
    ref.left.role = Role::supporting;
    ref.right.role = Role::non_supporting;
  } else if (label == "stoop_right") {
    peak_l = -cfg.non_supporting_fraction * cfg.stoop_torque_nm;
    peak_r = cfg.stoop_torque_nm;
    ref.left.role = Role::non_supporting;
    ref.right.role = Role::supporting;
  }
  for (std::size_t n = 0; n < kGridSize; ++n) {
    const double h = flexion_shape(grid_progress(n));
    ref.left.theta.push_back(cfg.rest_angle_rad + amp.x() * h);
    ref.right.theta.push_back(cfg.rest_angle_rad + amp.y() * h);
    ref.left.tau.push_back(peak_l * h);
    ref.right.tau.push_back(peak_r * h);
  }
  return ref;
}

/// One gait cycle over the grid; neither side supports a load worth locking for.
/// The hip moment resists the exoskeleton while the hip flexes (swing), so any
/// lock only adds residual torque.
inline HumanReference walking_reference(const SyntheticConfig& cfg) {
  HumanReference ref;
  ref.name = kWalkingClass;
  ref.left.role = ref.right.role = Role::non_supporting;
  for (std::size_t n = 0; n < kGridSize; ++n) {
    const double ph = 2.0 * kPi * grid_progress(n);
    const double swing = cfg.walking_amplitude_rad * std::sin(ph);
    ref.left.theta.push_back(cfg.rest_angle_rad + cfg.walking_offset_rad + swing);
    ref.right.theta.push_back(cfg.rest_angle_rad + cfg.walking_offset_rad - swing);
    ref.left.tau.push_back(-cfg.walking_torque_nm * std::cos(ph - cfg.walking_torque_phase));
    ref.right.tau.push_back(cfg.walking_torque_nm * std::cos(ph - cfg.walking_torque_phase));
  }
  return ref;
}

}  // namespace qpexo
