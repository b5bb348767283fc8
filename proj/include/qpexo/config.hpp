#pragma once

// Run configuration: one TOML file covering every module, validated before
// any command runs. Unknown keys are errors.

#include "qpexo/actuator.hpp"
#include "qpexo/controllers.hpp"
#include "qpexo/core.hpp"
#include "qpexo/dtw.hpp"
#include "qpexo/synthetic.hpp"
#include "qpexo/trace.hpp"

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace qpexo {

struct RunConfig {
  std::uint64_t seed = 42;
  std::filesystem::path out = "out";

  // Inputs; empty means the conventional location under `out`.
  std::string data_dir;
  std::string model_db;
  std::string utility_db;
  std::string trace;          // simulate: single trace instead of the manifest trials
  std::string trace_label = "unlabeled";
  std::string torque_table;   // optional alpha/tau table replacing the closed-form law

  SyntheticConfig synthetic;
  SegmenterConfig segmenter;
  double keep_fraction = 0.5;
  double regularization = 1e-6;
  ActuatorConfig actuator;
  std::string utility_method = "closed-form";
  ControllerConfig controller;
  std::vector<ControllerKind> evaluate_controllers{ControllerKind::pec, ControllerKind::umc, ControllerKind::eumc};
  unsigned workers = 4;

  std::filesystem::path data_path() const { return data_dir.empty() ? out / "data" : std::filesystem::path(data_dir); }
  std::filesystem::path model_db_path() const { return model_db.empty() ? out / "model_db.json" : std::filesystem::path(model_db); }
  std::filesystem::path utility_db_path() const {
    return utility_db.empty() ? out / "utility_db.json" : std::filesystem::path(utility_db);
  }

  void validate() const {
    synthetic.validate();
    actuator.validate();
    controller.validate();
    if (!(keep_fraction > 0 && keep_fraction <= 1)) throw ConfigError("train.keep_fraction must lie in (0, 1]");
    if (!(regularization >= 0)) throw ConfigError("train.regularization must be nonnegative");
    if (utility_method != "closed-form" && utility_method != "value-iteration")
      throw ConfigError("utility.method must be closed-form or value-iteration");
    if (evaluate_controllers.empty()) throw ConfigError("evaluate.controllers must not be empty");
    if (workers == 0) throw ConfigError("evaluate.workers must be positive");
    if (!(segmenter.smooth_s >= 0 && segmenter.onset_speed > segmenter.offset_speed && segmenter.offset_speed >= 0))
      throw ConfigError("segmenter thresholds are invalid");
  }
};

namespace detail {

/// Reads typed keys from one table and remembers which ones were consumed.
class TableReader {
 public:
  TableReader(const toml::table* table, std::string prefix) : table_(table), prefix_(std::move(prefix)) {}

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!table_) return;
    const toml::node* node = table_->get(key);
    if (!node) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = node->value_exact<bool>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = node->value_exact<std::string>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (node->is_number()) {
        out = static_cast<T>(*node->value<double>());
        return;
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = node->value_exact<std::int64_t>()) {
        if (*v < 0 && std::is_unsigned_v<T>) throw ConfigError("config key '" + name(key) + "' must be nonnegative");
        out = static_cast<T>(*v);
        return;
      }
    }
    throw ConfigError("config key '" + name(key) + "' has the wrong type");
  }

  std::vector<std::string> get_strings(const char* key, std::vector<std::string> fallback) {
    seen_.insert(key);
    if (!table_) return fallback;
    const toml::node* node = table_->get(key);
    if (!node) return fallback;
    const auto* arr = node->as_array();
    if (!arr) throw ConfigError("config key '" + name(key) + "' must be an array of strings");
    std::vector<std::string> out;
    for (const auto& el : *arr) {
      auto v = el.value_exact<std::string>();
      if (!v) throw ConfigError("config key '" + name(key) + "' must be an array of strings");
      out.push_back(*v);
    }
    return out;
  }

  const toml::table* sub(const char* key) {
    seen_.insert(key);
    if (!table_) return nullptr;
    const toml::node* node = table_->get(key);
    if (!node) return nullptr;
    if (!node->is_table()) throw ConfigError("config key '" + name(key) + "' must be a table");
    return node->as_table();
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_)
      if (!seen_.count(std::string(k.str()))) throw ConfigError("unknown config key '" + name(std::string(k.str())) + "'");
  }

 private:
  std::string name(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const toml::table* table_;
  std::string prefix_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline RunConfig parse_run_config(std::string_view text) {
  toml::table root;
  try {
    root = toml::parse(text);
  } catch (const toml::parse_error& e) {
    throw ConfigError(std::string("config is not valid TOML: ") + std::string(e.description()));
  }
  RunConfig cfg;
  detail::TableReader top(&root, "");
  std::int64_t seed = static_cast<std::int64_t>(cfg.seed);
  top.get("seed", seed);
  if (seed < 0) throw ConfigError("seed must be nonnegative");
  cfg.seed = static_cast<std::uint64_t>(seed);
  std::string out = cfg.out.string();
  top.get("out", out);
  cfg.out = out;
  std::string controller = to_string(cfg.controller.kind);
  top.get("controller", controller);
  cfg.controller.kind = controller_from_string(controller);

  {
    detail::TableReader t(top.sub("paths"), "paths");
    t.get("data_dir", cfg.data_dir);
    t.get("model_db", cfg.model_db);
    t.get("utility_db", cfg.utility_db);
    t.get("trace", cfg.trace);
    t.get("trace_label", cfg.trace_label);
    t.get("torque_table", cfg.torque_table);
    t.finish();
  }
  {
    auto& s = cfg.synthetic;
    detail::TableReader t(top.sub("synthetic"), "synthetic");
    t.get("squat_demos", s.squat_demos);
    t.get("stoop_demos", s.stoop_demos);
    t.get("trials_per_class", s.trials_per_class);
    t.get("walking_trials", s.walking_trials);
    t.get("stair_trials", s.stair_trials);
    t.get("lift_period_s", s.lift_period_s);
    t.get("period_sigma_s", s.period_sigma_s);
    t.get("stand_before_s", s.stand_before_s);
    t.get("stand_after_s", s.stand_after_s);
    t.get("rest_angle_rad", s.rest_angle_rad);
    t.get("rest_sigma_rad", s.rest_sigma_rad);
    t.get("trial_rest_sigma_rad", s.trial_rest_sigma_rad);
    t.get("squat_amplitude_rad", s.squat_amplitude_rad);
    t.get("stoop_supporting_rad", s.stoop_supporting_rad);
    t.get("stoop_non_supporting_rad", s.stoop_non_supporting_rad);
    t.get("amplitude_sigma_rel", s.amplitude_sigma_rel);
    t.get("asymmetry_sigma_rel", s.asymmetry_sigma_rel);
    t.get("squat_asymmetry_sigma_rel", s.squat_asymmetry_sigma_rel);
    t.get("noise_sigma_rad", s.noise_sigma_rad);
    t.get("quantize_counts", s.quantize_counts);
    t.get("walking_duration_s", s.walking_duration_s);
    t.get("walking_offset_rad", s.walking_offset_rad);
    t.get("walking_amplitude_rad", s.walking_amplitude_rad);
    t.get("walking_frequency_hz", s.walking_frequency_hz);
    t.get("walking_ramp_s", s.walking_ramp_s);
    t.get("stair_steps", s.stair_steps);
    t.get("stair_progress", s.stair_progress);
    t.get("stair_progress_rate", s.stair_progress_rate);
    t.get("stair_pause_s", s.stair_pause_s);
    t.get("squat_torque_nm", s.squat_torque_nm);
    t.get("stoop_torque_nm", s.stoop_torque_nm);
    t.get("non_supporting_fraction", s.non_supporting_fraction);
    t.get("walking_torque_nm", s.walking_torque_nm);
    t.get("walking_torque_phase", s.walking_torque_phase);
    t.finish();
  }
  {
    detail::TableReader t(top.sub("segmenter"), "segmenter");
    t.get("smooth_s", cfg.segmenter.smooth_s);
    t.get("onset_speed", cfg.segmenter.onset_speed);
    t.get("offset_speed", cfg.segmenter.offset_speed);
    t.get("offset_hold_s", cfg.segmenter.offset_hold_s);
    t.finish();
  }
  {
    detail::TableReader t(top.sub("train"), "train");
    t.get("keep_fraction", cfg.keep_fraction);
    t.get("regularization", cfg.regularization);
    t.finish();
  }
  {
    auto& d = cfg.controller.dtw;
    detail::TableReader t(top.sub("dtw"), "dtw");
    t.get("band_halfwidth", d.band_halfwidth);
    t.get("s_req", d.s_req);
    t.get("t_req", d.t_req);
    t.get("d_max", d.d_max);
    t.finish();
  }
  {
    auto& a = cfg.actuator;
    detail::TableReader t(top.sub("actuator"), "actuator");
    t.get("lever_mm", a.lever_mm);
    t.get("roller_distance_mm", a.roller_distance_mm);
    t.get("disk_radius_mm", a.disk_radius_mm);
    t.get("stiffness_n_per_mm", a.stiffness_n_per_mm);
    t.get("max_compression_mm", a.max_compression_mm);
    t.get("precompression_pct", a.precompression_pct);
    t.get("teeth", a.teeth);
    t.finish();
  }
  {
    detail::TableReader t(top.sub("utility"), "utility");
    t.get("method", cfg.utility_method);
    t.finish();
  }
  {
    auto& c = cfg.controller;
    detail::TableReader t(top.sub("controller"), "controller");
    t.get("velocity_threshold_rad_s", c.velocity_threshold_rad_s);
    t.get("abs_velocity", c.abs_velocity);
    t.get("hold_s", c.hold_s);
    t.get("umc_rate_hz", c.umc_rate_hz);
    t.get("tick_rate_hz", c.tick_rate_hz);
    t.get("calibration_s", c.calibration_s);
    t.get("accel_psd", c.kalman.accel_psd);
    double meas_std = std::sqrt(c.kalman.meas_var);
    t.get("meas_std_rad", meas_std);
    c.kalman.meas_var = meas_std * meas_std;
    t.finish();
  }
  {
    detail::TableReader t(top.sub("evaluate"), "evaluate");
    std::vector<std::string> names;
    for (auto k : cfg.evaluate_controllers) names.emplace_back(to_string(k));
    names = t.get_strings("controllers", names);
    cfg.evaluate_controllers.clear();
    for (const auto& n : names) cfg.evaluate_controllers.push_back(controller_from_string(n));
    t.get("workers", cfg.workers);
    t.finish();
  }
  top.finish();
  cfg.synthetic.rate_hz = cfg.controller.tick_rate_hz;
  cfg.validate();
  return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) { return parse_run_config(io::read_file(path)); }

/// Effective configuration, echoed into reports.
inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  const auto& s = c.synthetic;
  const auto& a = c.actuator;
  const auto& k = c.controller;
  json ctrls = json::array();
  for (auto kind : c.evaluate_controllers) ctrls.push_back(to_string(kind));
  return json{
      {"seed", c.seed},
      {"out", c.out.generic_string()},
      {"controller", to_string(k.kind)},
      {"paths",
       {{"data_dir", c.data_path().generic_string()},
        {"model_db", c.model_db_path().generic_string()},
        {"utility_db", c.utility_db_path().generic_string()},
        {"trace", c.trace},
        {"trace_label", c.trace_label},
        {"torque_table", c.torque_table}}},
      {"synthetic",
       {{"squat_demos", s.squat_demos},
        {"stoop_demos", s.stoop_demos},
        {"trials_per_class", s.trials_per_class},
        {"walking_trials", s.walking_trials},
        {"stair_trials", s.stair_trials},
        {"lift_period_s", s.lift_period_s},
        {"period_sigma_s", s.period_sigma_s},
        {"stand_before_s", s.stand_before_s},
        {"stand_after_s", s.stand_after_s},
        {"rest_angle_rad", s.rest_angle_rad},
        {"rest_sigma_rad", s.rest_sigma_rad},
        {"trial_rest_sigma_rad", s.trial_rest_sigma_rad},
        {"squat_amplitude_rad", s.squat_amplitude_rad},
        {"stoop_supporting_rad", s.stoop_supporting_rad},
        {"stoop_non_supporting_rad", s.stoop_non_supporting_rad},
        {"amplitude_sigma_rel", s.amplitude_sigma_rel},
        {"asymmetry_sigma_rel", s.asymmetry_sigma_rel},
        {"squat_asymmetry_sigma_rel", s.squat_asymmetry_sigma_rel},
        {"noise_sigma_rad", s.noise_sigma_rad},
        {"quantize_counts", s.quantize_counts},
        {"walking_duration_s", s.walking_duration_s},
        {"walking_offset_rad", s.walking_offset_rad},
        {"walking_amplitude_rad", s.walking_amplitude_rad},
        {"walking_frequency_hz", s.walking_frequency_hz},
        {"walking_ramp_s", s.walking_ramp_s},
        {"stair_steps", s.stair_steps},
        {"stair_progress", s.stair_progress},
        {"stair_progress_rate", s.stair_progress_rate},
        {"stair_pause_s", s.stair_pause_s},
        {"squat_torque_nm", s.squat_torque_nm},
        {"stoop_torque_nm", s.stoop_torque_nm},
        {"non_supporting_fraction", s.non_supporting_fraction},
        {"walking_torque_nm", s.walking_torque_nm},
        {"walking_torque_phase", s.walking_torque_phase}}},
      {"segmenter",
       {{"smooth_s", c.segmenter.smooth_s},
        {"onset_speed", c.segmenter.onset_speed},
        {"offset_speed", c.segmenter.offset_speed},
        {"offset_hold_s", c.segmenter.offset_hold_s}}},
      {"train", {{"keep_fraction", c.keep_fraction}, {"regularization", c.regularization}}},
      {"dtw", {{"band_halfwidth", k.dtw.band_halfwidth}, {"s_req", k.dtw.s_req}, {"t_req", k.dtw.t_req}, {"d_max", k.dtw.d_max}}},
      {"actuator",
       {{"lever_mm", a.lever_mm},
        {"roller_distance_mm", a.roller_distance_mm},
        {"disk_radius_mm", a.disk_radius_mm},
        {"stiffness_n_per_mm", a.stiffness_n_per_mm},
        {"max_compression_mm", a.max_compression_mm},
        {"precompression_pct", a.precompression_pct},
        {"teeth", a.teeth}}},
      {"utility", {{"method", c.utility_method}}},
      {"controller",
       {{"velocity_threshold_rad_s", k.velocity_threshold_rad_s},
        {"abs_velocity", k.abs_velocity},
        {"hold_s", k.hold_s},
        {"umc_rate_hz", k.umc_rate_hz},
        {"tick_rate_hz", k.tick_rate_hz},
        {"calibration_s", k.calibration_s},
        {"accel_psd", k.kalman.accel_psd},
        {"meas_std_rad", std::sqrt(k.kalman.meas_var)}}},
      {"evaluate", {{"controllers", ctrls}, {"workers", c.workers}}},
  };
}

}  // namespace qpexo
