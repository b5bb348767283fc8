#pragma once

// Deterministic trace replay through a controller and both actuator sides,
// plus the per-trial evaluation metrics.

#include "qpexo/actuator.hpp"
#include "qpexo/controllers.hpp"
#include "qpexo/core.hpp"
#include "qpexo/io.hpp"
#include "qpexo/motion_model.hpp"
#include "qpexo/trace.hpp"
#include "qpexo/utility.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace qpexo {

/// Motion names the log's posterior columns refer to, in column order.
inline const std::array<std::string, 3> kLoggedMotions{"squat", "stoop_left", "stoop_right"};

inline constexpr std::string_view kLogHeader =
    "tick,t_s,q_l,q_r,omega_l,omega_r,action,lock_l,lock_r,alpha_l,alpha_r,tau_l,tau_r,p_squat,p_sl,p_sr,p_other,s_curr_best";

struct TickRecord {
  long tick = 0;
  double t = 0.0;
  Vec2 q = Vec2::Zero();
  Vec2 omega = Vec2::Zero();
  Action action = Action::a1;
  bool lock_l = false, lock_r = false;
  Vec2 alpha = Vec2::Zero();
  Vec2 tau = Vec2::Zero();
  /// Present on intent-estimation ticks only.
  bool evaluated = false;
  std::array<std::optional<double>, 3> p_motion;  // kLoggedMotions order
  double p_other = 0.0;
  std::optional<double> s_curr_best;
  bool fault = false;
};

struct ReplayLog {
  std::string label;
  std::vector<TickRecord> rows;
};

inline std::string format_log_csv(const ReplayLog& log) {
  std::string out(kLogHeader);
  out += '\n';
  auto opt = [](const std::optional<double>& v) { return v ? io::format_double(*v) : std::string(); };
  for (const auto& r : log.rows) {
    out += std::to_string(r.tick) + ',' + io::format_double(r.t) + ',' + io::format_double(r.q.x()) + ',' +
           io::format_double(r.q.y()) + ',' + io::format_double(r.omega.x()) + ',' + io::format_double(r.omega.y()) + ',' +
           to_string(r.action) + ',' + (r.lock_l ? '1' : '0') + ',' + (r.lock_r ? '1' : '0') + ',' +
           io::format_double(r.alpha.x()) + ',' + io::format_double(r.alpha.y()) + ',' + io::format_double(r.tau.x()) + ',' +
           io::format_double(r.tau.y());
    if (r.evaluated) {
      for (const auto& p : r.p_motion) out += ',' + opt(p);
      out += ',' + io::format_double(r.p_other) + ',' + opt(r.s_curr_best);
    } else {
      out += ",,,,,";
    }
    out += '\n';
  }
  return out;
}

struct ReplayResult {
  ReplayLog log;
  double peak_tau_left = 0.0;
  double peak_tau_right = 0.0;
  double max_alpha_left = 0.0;
  double max_alpha_right = 0.0;
  std::size_t faults = 0;
};

/// Feeds every sample through the controller, the signal hold and both
/// actuator sides. The plant follows the trace angles whatever the assist.
inline ReplayResult replay(const MotionTrace& input, const ControllerConfig& ctrl, const ActuatorConfig& act,
                           const ModelDatabase* db, const UtilityTable* utilities) {
  act.validate();
  MotionTrace trace = input;
  if (trace.size() >= 2 && std::abs(trace.rate_hz - ctrl.tick_rate_hz) > 1e-9) trace = resample_uniform(trace, ctrl.tick_rate_hz);

  std::array<std::optional<std::size_t>, 3> column_model;
  if (db)
    for (std::size_t c = 0; c < kLoggedMotions.size(); ++c)
      for (std::size_t j = 0; j < db->models.size(); ++j)
        if (db->models[j].name == kLoggedMotions[c]) column_model[c] = j;

  ControlLoop loop(ctrl, db, utilities);
  LowLevelHold hold(ctrl.hold_ticks());
  ActuatorState left, right;
  ReplayResult out;
  out.log.label = trace.label;
  out.log.rows.reserve(trace.size());
  long tick = 0;
  for (const auto& sample : trace.samples) {
    auto step_out = loop.tick(sample.t, sample.q);
    const auto [cmd_l, cmd_r] = hold.tick(step_out.action);
    left = step(left, sample.q.x(), cmd_l, act);
    right = step(right, sample.q.y(), cmd_r, act);

    TickRecord r;
    r.tick = tick++;
    r.t = sample.t;
    r.q = sample.q;
    r.omega = step_out.velocity.omega();
    r.action = step_out.action;
    r.lock_l = left.locked;
    r.lock_r = right.locked;
    r.alpha = {left.alpha, right.alpha};
    r.tau = {left.tau_exo, right.tau_exo};
    if (step_out.umc) {
      const auto& u = *step_out.umc;
      r.fault = u.fault;
      if (u.fault) ++out.faults;
      if (!u.fault) {
        r.evaluated = true;
        const auto& post = u.posterior;
        for (std::size_t c = 0; c < column_model.size(); ++c)
          if (column_model[c]) r.p_motion[c] = post.posterior[*column_model[c]];
        r.p_other = post.p_other();
        std::optional<std::size_t> best;
        for (std::size_t j = 0; j < post.n_models(); ++j)
          if (post.s_curr[j] && (!best || post.posterior[j] > post.posterior[*best])) best = j;
        if (best) r.s_curr_best = post.s_curr[*best];
      }
    }
    out.peak_tau_left = std::max(out.peak_tau_left, r.tau.x());
    out.peak_tau_right = std::max(out.peak_tau_right, r.tau.y());
    out.max_alpha_left = std::max(out.max_alpha_left, r.alpha.x());
    out.max_alpha_right = std::max(out.max_alpha_right, r.alpha.y());
    out.log.rows.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

/// Trace-time interval of the first (flexion) half of a lifting motion.
struct TrialWindow {
  double start_t = 0.0;
  double half_t = 0.0;

  bool contains(double t) const { return t >= start_t && t <= half_t; }
};

/// First motion segment of the trace, cut at its temporal midpoint.
inline std::optional<TrialWindow> first_half_window(const MotionTrace& trace, const SegmenterConfig& cfg = {}) {
  const auto segs = find_segments(trace, cfg);
  if (segs.empty()) return std::nullopt;
  const double t0 = trace.samples[segs.front().first].t;
  const double t1 = trace.samples[segs.front().last].t;
  return TrialWindow{t0, 0.5 * (t0 + t1)};
}

inline std::optional<std::size_t> logged_column(const std::string& motion) {
  for (std::size_t c = 0; c < kLoggedMotions.size(); ++c)
    if (kLoggedMotions[c] == motion) return c;
  return std::nullopt;
}

/// True iff the true motion's posterior reached 0.5 inside the window.
inline bool score_recognition(const ReplayLog& log, const std::string& truth, const TrialWindow& window) {
  const auto col = logged_column(truth);
  if (!col) return false;
  for (const auto& r : log.rows)
    if (r.evaluated && window.contains(r.t) && r.p_motion[*col] && *r.p_motion[*col] >= 0.5) return true;
  return false;
}

/// Correct action for a lifting class: both sides for squats, the supporting side for stoops.
inline std::optional<Action> expected_action(const std::string& truth) {
  if (truth == "squat") return Action::a2;
  if (truth == "stoop_left") return Action::a4;
  if (truth == "stoop_right") return Action::a3;
  return std::nullopt;
}

inline std::optional<Action> first_decision(const ReplayLog& log, const TrialWindow& window) {
  for (const auto& r : log.rows)
    if (window.contains(r.t) && r.action != Action::a1) return r.action;
  return std::nullopt;
}

/// The first non-a1 signal in the window decides.
inline bool score_decision(const ReplayLog& log, const std::string& truth, const TrialWindow& window) {
  const auto want = expected_action(truth);
  const auto got = first_decision(log, window);
  return want && got && *want == *got;
}

inline std::size_t count_false_positives(const ReplayLog& log) {
  std::size_t n = 0;
  for (const auto& r : log.rows)
    if (r.action != Action::a1) ++n;
  return n;
}

// ---------------------------------------------------------------------------
// Reports

struct TrialReport {
  std::string trial;
  std::string label;
  std::string controller;
  std::optional<bool> recognized;
  std::optional<bool> decision_correct;
  std::optional<std::string> first_decision;
  std::optional<TrialWindow> window;
  std::size_t false_positive_count = 0;
  double peak_tau_left = 0.0;
  double peak_tau_right = 0.0;
  std::size_t faults = 0;
};

inline bool is_lifting(const std::string& label) { return expected_action(label).has_value(); }

/// Metrics for one replay. Lifting trials are scored for recognition and
/// decision, walking and stair trials for false positives.
inline TrialReport score_trial(const std::string& trial, const MotionTrace& trace, const ReplayResult& result,
                               ControllerKind controller, const SegmenterConfig& seg = {}) {
  TrialReport rep;
  rep.trial = trial;
  rep.label = trace.label;
  rep.controller = to_string(controller);
  rep.peak_tau_left = result.peak_tau_left;
  rep.peak_tau_right = result.peak_tau_right;
  rep.faults = result.faults;
  rep.false_positive_count = is_lifting(trace.label) ? 0 : count_false_positives(result.log);
  if (is_lifting(trace.label)) {
    rep.window = first_half_window(trace, seg);
    if (rep.window) {
      rep.recognized = score_recognition(result.log, trace.label, *rep.window);
      rep.decision_correct = score_decision(result.log, trace.label, *rep.window);
      if (auto d = first_decision(result.log, *rep.window)) rep.first_decision = to_string(*d);
    } else {
      rep.recognized = false;
      rep.decision_correct = false;
    }
  }
  return rep;
}

inline nlohmann::json to_json(const TrialReport& r) {
  nlohmann::json j;
  j["trial"] = r.trial;
  j["label"] = r.label;
  j["controller"] = r.controller;
  j["recognized"] = r.recognized ? nlohmann::json(*r.recognized) : nlohmann::json();
  j["decision_correct"] = r.decision_correct ? nlohmann::json(*r.decision_correct) : nlohmann::json();
  j["first_decision"] = r.first_decision ? nlohmann::json(*r.first_decision) : nlohmann::json();
  if (r.window)
    j["first_half_s"] = {r.window->start_t, r.window->half_t};
  else
    j["first_half_s"] = nullptr;
  j["false_positive_count"] = r.false_positive_count;
  j["peak_tau_left_nm"] = r.peak_tau_left;
  j["peak_tau_right_nm"] = r.peak_tau_right;
  j["faults"] = r.faults;
  return j;
}

}  // namespace qpexo
