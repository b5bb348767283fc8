#pragma once

// High-level controllers (PEC, UMC, E-UMC) and the low-level signal hold.

#include "qpexo/core.hpp"
#include "qpexo/dtw.hpp"
#include "qpexo/intent.hpp"
#include "qpexo/motion_model.hpp"
#include "qpexo/utility.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace qpexo {

// ---------------------------------------------------------------------------
// Velocity estimation

struct KalmanConfig {
  double accel_psd = 25.0;                         // rad^2/s^3, white acceleration
  double meas_var = 3.82e-4 * 3.82e-4;             // rad^2, one encoder count
  double initial_velocity_var = 1.0;               // (rad/s)^2
};

/// Constant-velocity filter state of one joint: (angle, velocity).
struct JointFilter {
  Vec2 x = Vec2::Zero();
  Mat2 P = Mat2::Identity();
};

struct VelocityEstimate {
  std::array<JointFilter, 2> joints;  // left, right
  bool initialized = false;

  double omega_left() const { return joints[0].x(1); }
  double omega_right() const { return joints[1].x(1); }
  Vec2 omega() const { return {omega_left(), omega_right()}; }
};

inline VelocityEstimate kalman_init(const Vec2& q, const KalmanConfig& cfg = {}) {
  VelocityEstimate est;
  for (int j = 0; j < 2; ++j) {
    est.joints[j].x = Vec2(q(j), 0.0);
    est.joints[j].P << cfg.meas_var, 0.0, 0.0, cfg.initial_velocity_var;
  }
  est.initialized = true;
  return est;
}

/// One predict + update per joint. An uninitialized estimate is seeded from q_meas.
inline VelocityEstimate kalman_update(const VelocityEstimate& est, const Vec2& q_meas, double dt, const KalmanConfig& cfg = {}) {
  if (!(dt > 0.0)) throw ValidationError("kalman_update needs dt > 0");
  if (!est.initialized) return kalman_init(q_meas, cfg);
  Mat2 F;
  F << 1.0, dt, 0.0, 1.0;
  Mat2 Q;
  Q << dt * dt * dt / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt;
  Q *= cfg.accel_psd;
  VelocityEstimate out = est;
  for (int j = 0; j < 2; ++j) {
    auto& f = out.joints[j];
    f.x = F * f.x;
    f.P = F * f.P * F.transpose() + Q;
    const double s = f.P(0, 0) + cfg.meas_var;
    const Vec2 K = f.P.col(0) / s;
    f.x += K * (q_meas(j) - f.x(0));
    f.P = (Mat2::Identity() - K * Eigen::RowVector2d(1.0, 0.0)) * f.P;
    f.P = 0.5 * (f.P + f.P.transpose());
  }
  return out;
}

/// Both hips flexing at or above the threshold.
inline bool velocity_gate(const VelocityEstimate& vel, double threshold = 1.0, bool abs_velocity = false) {
  double l = vel.omega_left(), r = vel.omega_right();
  if (abs_velocity) {
    l = std::abs(l);
    r = std::abs(r);
  }
  return l >= threshold && r >= threshold;
}

// ---------------------------------------------------------------------------
// Passive exoskeleton controller

inline Action pec_tick(const VelocityEstimate& vel, double threshold = 1.0, bool abs_velocity = false) {
  return velocity_gate(vel, threshold, abs_velocity) ? Action::a2 : Action::a1;
}

// ---------------------------------------------------------------------------
// Utility maximizing controller

struct UmcOutput {
  Action action = Action::a1;
  std::vector<DtwMatch> matches;
  PosteriorEstimate posterior;
  Decision decision;
  bool fault = false;
  std::string fault_message;
};

/// Onset detection, posterior estimation and the expected-utility decision.
/// Internal faults never lock: they yield a1 with the fault recorded.
inline UmcOutput umc_tick(const ObservationWindow& window, const ModelDatabase& db, const UtilityTable& utilities,
                          const DtwConfig& dtw = {}) {
  UmcOutput out;
  try {
    if (window.size() != kWindowSize) throw ValidationError("observation window is not full");
    out.matches = match_all(window, db, dtw);
    out.posterior = estimate_posterior(out.matches, db.priors);
    out.decision = expected_utility(out.posterior, utilities);
    out.action = out.decision.action;
  } catch (const std::exception& e) {
    out.action = Action::a1;
    out.fault = true;
    out.fault_message = e.what();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Calibration (E-UMC)

struct CalibrationOffset {
  Vec2 q_rest = Vec2::Zero();
  Vec2 rest_pose = Vec2::Zero();  // model-grid resting pose the rest angles map to
  bool captured = false;

  Vec2 apply(const Vec2& q) const { return q - q_rest + rest_pose; }
};

/// Mean of the standing samples, aligned to the average first grid point of the models.
inline CalibrationOffset capture_calibration(std::span<const Vec2> standing, const ModelDatabase& db) {
  if (standing.empty()) throw ValidationError("calibration needs standing samples");
  CalibrationOffset c;
  for (const auto& q : standing) c.q_rest += q;
  c.q_rest /= static_cast<double>(standing.size());
  if (!db.models.empty()) {
    for (const auto& m : db.models) c.rest_pose += m.mean.front();
    c.rest_pose /= static_cast<double>(db.models.size());
  }
  c.captured = true;
  return c;
}

// ---------------------------------------------------------------------------
// Low-level signal hold

/// Expands actions into per-side lock commands; an asserted side stays high
/// for `hold_ticks` ticks and re-assertion restarts the hold.
class LowLevelHold {
 public:
  explicit LowLevelHold(int hold_ticks = 30) : hold_ticks_(hold_ticks) {}

  /// Returns (left, right) commands for this tick.
  std::pair<bool, bool> tick(Action a) {
    if (locks_left(a)) left_ = hold_ticks_;
    if (locks_right(a)) right_ = hold_ticks_;
    const std::pair<bool, bool> cmd{left_ > 0, right_ > 0};
    if (left_ > 0) --left_;
    if (right_ > 0) --right_;
    return cmd;
  }

 private:
  int hold_ticks_;
  int left_ = 0, right_ = 0;
};

inline std::vector<std::pair<bool, bool>> lowlevel_hold(const std::vector<Action>& signals, int hold_ticks = 30) {
  LowLevelHold hold(hold_ticks);
  std::vector<std::pair<bool, bool>> out;
  out.reserve(signals.size());
  for (auto a : signals) out.push_back(hold.tick(a));
  return out;
}

// ---------------------------------------------------------------------------
// Tick-level control loop

enum class ControllerKind { pec, umc, eumc };

inline const char* to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::pec: return "pec";
    case ControllerKind::umc: return "umc";
    case ControllerKind::eumc: return "eumc";
  }
  return "?";
}

inline ControllerKind controller_from_string(const std::string& s) {
  if (s == "pec") return ControllerKind::pec;
  if (s == "umc") return ControllerKind::umc;
  if (s == "eumc") return ControllerKind::eumc;
  throw ConfigError("unknown controller '" + s + "' (expected umc, eumc or pec)");
}

struct ControllerConfig {
  ControllerKind kind = ControllerKind::eumc;
  double velocity_threshold_rad_s = 1.0;
  bool abs_velocity = false;
  KalmanConfig kalman;
  double hold_s = 0.3;
  double umc_rate_hz = 10.0;
  double tick_rate_hz = 100.0;
  double calibration_s = 1.0;
  DtwConfig dtw;

  int hold_ticks() const { return static_cast<int>(std::lround(hold_s * tick_rate_hz)); }
  long umc_decimation() const { return std::max(1L, std::lround(tick_rate_hz / umc_rate_hz)); }
  std::size_t calibration_ticks() const { return static_cast<std::size_t>(std::lround(calibration_s * tick_rate_hz)); }

  void validate() const {
    if (!(tick_rate_hz > 0 && umc_rate_hz > 0 && umc_rate_hz <= tick_rate_hz)) throw ConfigError("controller rates are invalid");
    if (!(hold_s >= 0)) throw ConfigError("hold_s must be nonnegative");
    if (!(calibration_s > 0)) throw ConfigError("calibration_s must be positive");
    if (!(kalman.accel_psd > 0 && kalman.meas_var > 0)) throw ConfigError("kalman noise parameters must be positive");
    if (dtw.band_halfwidth < 0) throw ConfigError("band_halfwidth must be nonnegative");
  }
};

/// E-UMC state carried between ticks.
struct EumcState {
  CalibrationOffset calibration;
  VelocityEstimate velocity;
  std::deque<std::pair<double, Vec2>> raw_window;  // (t, raw q), newest last
  long tick = 0;
};

struct EumcOutput {
  Action action = Action::a1;
  bool gate = false;
  std::optional<UmcOutput> umc;
};

/// Pushes a raw sample, updates the velocity estimate and, when both hips flex
/// above threshold on an intent-estimation tick, runs the UMC on the calibrated window.
inline EumcOutput eumc_tick(EumcState& state, double t, const Vec2& q_raw, const ModelDatabase& db, const UtilityTable& utilities,
                            const ControllerConfig& cfg) {
  if (!state.calibration.captured) throw ValidationError("E-UMC control requested before calibration");
  const double dt = 1.0 / cfg.tick_rate_hz;
  state.velocity = kalman_update(state.velocity, q_raw, dt, cfg.kalman);
  state.raw_window.emplace_back(t, q_raw);
  while (state.raw_window.size() > kWindowSize) state.raw_window.pop_front();

  EumcOutput out;
  out.gate = velocity_gate(state.velocity, cfg.velocity_threshold_rad_s, cfg.abs_velocity);
  const bool umc_tick_due = state.tick % cfg.umc_decimation() == 0;
  ++state.tick;
  if (!out.gate || !umc_tick_due) return out;
  ObservationWindow window;
  for (const auto& [ts, q] : state.raw_window) {
    window.t.push_back(ts);
    window.obs.push_back(state.calibration.apply(q));
  }
  out.umc = umc_tick(window, db, utilities, cfg.dtw);
  out.action = out.umc->action;
  return out;
}

struct TickOutput {
  Action action = Action::a1;
  VelocityEstimate velocity;
  bool gate = false;
  bool calibrating = false;
  std::optional<UmcOutput> umc;
};

/// Runs one of the three controllers at the tick rate.
class ControlLoop {
 public:
  ControlLoop(const ControllerConfig& cfg, const ModelDatabase* db, const UtilityTable* utilities)
      : cfg_(cfg), db_(db), utilities_(utilities) {
    cfg_.validate();
    if (cfg_.kind != ControllerKind::pec && (db_ == nullptr || utilities_ == nullptr))
      throw ConfigError("UMC and E-UMC need a model database and a utility table");
    if (db_ && utilities_ && cfg_.kind != ControllerKind::pec) {
      if (db_->models.size() != utilities_->motions.size()) throw ConfigError("model database and utility table disagree");
      for (std::size_t j = 0; j < db_->models.size(); ++j)
        if (db_->models[j].name != utilities_->motions[j])
          throw ConfigError("utility table motion '" + utilities_->motions[j] + "' does not match model '" + db_->models[j].name + "'");
    }
  }

  TickOutput tick(double t, const Vec2& q_raw) {
    TickOutput out;
    const double dt = 1.0 / cfg_.tick_rate_hz;
    switch (cfg_.kind) {
      case ControllerKind::pec:
        velocity_ = kalman_update(velocity_, q_raw, dt, cfg_.kalman);
        out.gate = velocity_gate(velocity_, cfg_.velocity_threshold_rad_s, cfg_.abs_velocity);
        out.action = out.gate ? Action::a2 : Action::a1;
        out.velocity = velocity_;
        break;
      case ControllerKind::umc: {
        velocity_ = kalman_update(velocity_, q_raw, dt, cfg_.kalman);
        out.velocity = velocity_;
        window_.emplace_back(t, q_raw);
        while (window_.size() > kWindowSize) window_.pop_front();
        const bool due = ticks_ % cfg_.umc_decimation() == 0;
        if (due && window_.size() == kWindowSize) {
          ObservationWindow w;
          for (const auto& [ts, q] : window_) {
            w.t.push_back(ts);
            w.obs.push_back(q);
          }
          out.umc = umc_tick(w, *db_, *utilities_, cfg_.dtw);
          out.action = out.umc->action;
        }
        break;
      }
      case ControllerKind::eumc: {
        if (!eumc_.calibration.captured) {
          out.calibrating = true;
          standing_.push_back(q_raw);
          eumc_.velocity = kalman_update(eumc_.velocity, q_raw, dt, cfg_.kalman);
          eumc_.raw_window.emplace_back(t, q_raw);
          while (eumc_.raw_window.size() > kWindowSize) eumc_.raw_window.pop_front();
          if (standing_.size() >= cfg_.calibration_ticks()) eumc_.calibration = capture_calibration(standing_, *db_);
          out.velocity = eumc_.velocity;
          break;
        }
        auto r = eumc_tick(eumc_, t, q_raw, *db_, *utilities_, cfg_);
        out.action = r.action;
        out.gate = r.gate;
        out.umc = std::move(r.umc);
        out.velocity = eumc_.velocity;
        break;
      }
    }
    ++ticks_;
    return out;
  }

  const ControllerConfig& config() const { return cfg_; }

 private:
  ControllerConfig cfg_;
  const ModelDatabase* db_;
  const UtilityTable* utilities_;
  VelocityEstimate velocity_;
  std::deque<std::pair<double, Vec2>> window_;
  EumcState eumc_;
  std::vector<Vec2> standing_;
  long ticks_ = 0;
};

}  // namespace qpexo
