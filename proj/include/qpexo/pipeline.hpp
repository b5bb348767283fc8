#pragma once

// Pipeline commands: synthetic data, training, utility tables, replay and
// batch evaluation. Every output is written atomically.

#include "qpexo/config.hpp"
#include "qpexo/io.hpp"
#include "qpexo/motion_model.hpp"
#include "qpexo/simulator.hpp"
#include "qpexo/synthetic.hpp"
#include "qpexo/trace.hpp"
#include "qpexo/utility.hpp"
#include "qpexo/value_iteration.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace qpexo {

namespace fs = std::filesystem;

inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kFirstHalfRule = "time-based: flexion half of the first detected motion segment";

struct ManifestEntry {
  std::string id;
  std::string file;  // relative to the data directory
  std::string label;
};

struct ReferenceEntry {
  std::string name;
  std::string file;
  Role left_role = Role::symmetric;
  Role right_role = Role::symmetric;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> demos;
  std::vector<ManifestEntry> trials;
  std::vector<ReferenceEntry> references;
};

inline nlohmann::json to_json(const Manifest& m) {
  using nlohmann::json;
  json doc;
  doc["version"] = 1;
  doc["seed"] = m.seed;
  auto entries = [](const std::vector<ManifestEntry>& v) {
    json arr = json::array();
    for (const auto& e : v) arr.push_back({{"id", e.id}, {"file", e.file}, {"label", e.label}});
    return arr;
  };
  doc["demos"] = entries(m.demos);
  doc["trials"] = entries(m.trials);
  doc["references"] = json::array();
  for (const auto& r : m.references)
    doc["references"].push_back(
        {{"name", r.name}, {"file", r.file}, {"left_role", to_string(r.left_role)}, {"right_role", to_string(r.right_role)}});
  return doc;
}

inline Manifest load_manifest(const fs::path& data_dir) {
  const fs::path path = data_dir / kManifestName;
  if (!fs::exists(path)) throw ValidationError("missing manifest " + path.string() + " (run gen-synthetic first)");
  Manifest m;
  try {
    const auto doc = nlohmann::json::parse(io::read_file(path));
    m.seed = doc.at("seed").get<std::uint64_t>();
    for (const char* key : {"demos", "trials"}) {
      auto& dst = std::string(key) == "demos" ? m.demos : m.trials;
      for (const auto& e : doc.at(key))
        dst.push_back({e.at("id").get<std::string>(), e.at("file").get<std::string>(), e.at("label").get<std::string>()});
    }
    for (const auto& r : doc.at("references"))
      m.references.push_back({r.at("name").get<std::string>(), r.at("file").get<std::string>(),
                              role_from_string(r.at("left_role").get<std::string>()),
                              role_from_string(r.at("right_role").get<std::string>())});
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed manifest: " + std::string(e.what()));
  }
  return m;
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline std::string two_digits(std::size_t k) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02zu", k);
  return buf;
}

// ---------------------------------------------------------------------------
// gen-synthetic

inline Manifest cmd_gen_synthetic(const RunConfig& cfg) {
  const auto& s = cfg.synthetic;
  const fs::path dir = cfg.data_path();
  Manifest m;
  m.seed = cfg.seed;
  enum : std::uint32_t { kDemo = 1, kTrial = 2, kWalk = 3, kStair = 4 };
  for (std::uint32_t c = 0; c < kLiftClasses.size(); ++c) {
    const auto& label = kLiftClasses[c];
    for (std::size_t k = 0; k < s.demos_for(label); ++k) {
      auto rng = trace_rng(cfg.seed, kDemo, c, static_cast<std::uint32_t>(k));
      const std::string id = label + "_" + two_digits(k);
      write_trace_csv(dir / "demos" / (id + ".csv"), generate_lift(label, rng, s, true));
      m.demos.push_back({id, "demos/" + id + ".csv", label});
    }
  }
  for (std::uint32_t c = 0; c < kLiftClasses.size(); ++c) {
    const auto& label = kLiftClasses[c];
    for (std::size_t k = 0; k < s.trials_per_class; ++k) {
      auto rng = trace_rng(cfg.seed, kTrial, c, static_cast<std::uint32_t>(k));
      const std::string id = label + "_" + two_digits(k);
      write_trace_csv(dir / "trials" / (id + ".csv"), generate_lift(label, rng, s));
      m.trials.push_back({id, "trials/" + id + ".csv", label});
    }
  }
  for (std::size_t k = 0; k < s.walking_trials; ++k) {
    auto rng = trace_rng(cfg.seed, kWalk, 0, static_cast<std::uint32_t>(k));
    const std::string id = kWalkingClass + "_" + two_digits(k);
    write_trace_csv(dir / "trials" / (id + ".csv"), generate_walking(rng, s));
    m.trials.push_back({id, "trials/" + id + ".csv", kWalkingClass});
  }
  for (std::size_t k = 0; k < s.stair_trials; ++k) {
    auto rng = trace_rng(cfg.seed, kStair, 0, static_cast<std::uint32_t>(k));
    const std::string id = kStairClass + "_" + two_digits(k);
    write_trace_csv(dir / "trials" / (id + ".csv"), generate_stairs(rng, s));
    m.trials.push_back({id, "trials/" + id + ".csv", kStairClass});
  }
  std::vector<HumanReference> refs;
  for (const auto& label : kLiftClasses) refs.push_back(lift_reference(label, s));
  refs.push_back(walking_reference(s));
  for (const auto& r : refs) {
    const std::string file = "references/" + r.name + ".csv";
    io::write_file_atomic(dir / file, format_reference_csv(r));
    m.references.push_back({r.name, file, r.left.role, r.right.role});
  }
  io::write_file_atomic(dir / kManifestName, dump(to_json(m)));
  return m;
}

// ---------------------------------------------------------------------------
// train

inline MotionTrace load_entry(const fs::path& dir, const ManifestEntry& e, double rate_hz) {
  const fs::path path = dir / e.file;
  if (!fs::exists(path)) throw ValidationError("missing trace " + path.string());
  return ingest_csv(path, rate_hz, e.label);
}

/// One model per trace label, in first-seen order, each learned from the
/// first motion segment of every demo.
inline ModelDatabase learn_database(const std::vector<MotionTrace>& demos, const SegmenterConfig& seg, double keep_fraction,
                                    double regularization) {
  std::vector<std::string> order;
  std::map<std::string, std::vector<NormalizedDemo>> grouped;
  for (const auto& trace : demos) {
    const auto segs = segment(trace, seg);
    if (segs.empty()) throw ValidationError("demo labeled " + trace.label + " contains no motion segment");
    if (!grouped.count(trace.label)) order.push_back(trace.label);
    grouped[trace.label].push_back(normalize(segs.front(), keep_fraction));
  }
  if (order.empty()) throw ValidationError("no training demos");
  ModelDatabase db;
  for (const auto& label : order) db.models.push_back(learn_model(grouped[label], regularization, label));
  db.priors = ModelDatabase::uniform_priors(db.models.size());
  db.validate();
  return db;
}

inline ModelDatabase train_models(const RunConfig& cfg, const Manifest& m) {
  const fs::path dir = cfg.data_path();
  std::vector<MotionTrace> demos;
  for (const auto& e : m.demos) {
    demos.push_back(load_entry(dir, e, cfg.controller.tick_rate_hz));
    if (find_segments(demos.back(), cfg.segmenter).empty()) throw ValidationError("demo " + e.id + " contains no motion segment");
  }
  return learn_database(demos, cfg.segmenter, cfg.keep_fraction, cfg.regularization);
}

inline ModelDatabase cmd_train(const RunConfig& cfg) {
  const auto db = train_models(cfg, load_manifest(cfg.data_path()));
  save_db(db, cfg.model_db_path());
  return db;
}

// ---------------------------------------------------------------------------
// utility-build

inline std::vector<HumanReference> load_references(const RunConfig& cfg, const Manifest& m) {
  std::vector<HumanReference> refs;
  for (const auto& r : m.references) {
    const fs::path path = cfg.data_path() / r.file;
    if (!fs::exists(path)) throw ValidationError("missing reference " + path.string());
    refs.push_back(parse_reference_csv(io::read_file(path), r.name, r.left_role, r.right_role));
  }
  return refs;
}

inline ActuatorConfig effective_actuator(const RunConfig& cfg) {
  ActuatorConfig a = cfg.actuator;
  if (!cfg.torque_table.empty()) {
    if (!fs::exists(cfg.torque_table)) throw ValidationError("missing torque table " + cfg.torque_table);
    a.table = load_torque_table(cfg.torque_table);
  }
  a.validate();
  return a;
}

struct UtilityBuildResult {
  UtilityTable table;
  double max_method_deviation = 0.0;  // between closed form and value iteration
  nlohmann::json report;
};

inline UtilityBuildResult cmd_utility_build(const RunConfig& cfg) {
  const auto manifest = load_manifest(cfg.data_path());
  const auto refs = load_references(cfg, manifest);
  const auto act = effective_actuator(cfg);
  std::vector<std::string> motions;
  if (fs::exists(cfg.model_db_path())) {
    for (const auto& m : load_db(cfg.model_db_path()).models) motions.push_back(m.name);
  } else {
    for (const auto& r : refs)
      if (r.name != kWalkingClass) motions.push_back(r.name);
  }
  UtilityBuildResult out;
  const auto closed = build_utilities(refs, act, motions, kWalkingClass);
  const auto vi = build_utilities_vi(refs, act, motions, kWalkingClass);
  nlohmann::json per_motion = nlohmann::json::object();
  for (std::size_t j = 0; j < motions.size(); ++j) {
    double dev = 0.0;
    for (std::size_t a = 0; a < kNumActions; ++a)
      for (std::size_t n = 0; n < kGridSize; ++n) dev = std::max(dev, std::abs(closed.utilities[j][a][n] - vi.utilities[j][a][n]));
    per_motion[motions[j]] = dev;
    out.max_method_deviation = std::max(out.max_method_deviation, dev);
  }
  double other_dev = 0.0;
  for (std::size_t a = 0; a < kNumActions; ++a) other_dev = std::max(other_dev, std::abs(closed.u_other[a] - vi.u_other[a]));
  out.table = cfg.utility_method == "value-iteration" ? vi : closed;
  out.report = {{"config", to_json(cfg)},
                {"method", out.table.method},
                {"max_abs_deviation_closed_form_vs_value_iteration", out.max_method_deviation},
                {"deviation_per_motion", per_motion},
                {"other_row_deviation", other_dev}};
  save_utilities(out.table, cfg.utility_db_path());
  io::write_file_atomic(cfg.out / "utility_report.json", dump(out.report));
  return out;
}

// ---------------------------------------------------------------------------
// simulate / evaluate

struct TrialInput {
  std::string id;
  MotionTrace trace;
};

inline std::vector<TrialInput> load_trials(const RunConfig& cfg) {
  std::vector<TrialInput> trials;
  const double rate = cfg.controller.tick_rate_hz;
  if (!cfg.trace.empty()) {
    if (!fs::exists(cfg.trace)) throw ValidationError("missing trace " + cfg.trace);
    trials.push_back({fs::path(cfg.trace).stem().string(), ingest_csv(cfg.trace, rate, cfg.trace_label)});
    return trials;
  }
  const auto m = load_manifest(cfg.data_path());
  for (const auto& e : m.trials) trials.push_back({e.id, load_entry(cfg.data_path(), e, rate)});
  if (trials.empty()) throw ValidationError("no trials to replay");
  return trials;
}

struct ModelInputs {
  std::optional<ModelDatabase> db;
  std::optional<UtilityTable> utilities;
};

inline ModelInputs load_model_inputs(const RunConfig& cfg, bool required) {
  ModelInputs in;
  const auto dbp = cfg.model_db_path();
  const auto up = cfg.utility_db_path();
  if (fs::exists(dbp)) in.db = load_db(dbp);
  if (fs::exists(up)) in.utilities = load_utilities(up);
  if (required && !in.db) throw ValidationError("missing model database " + dbp.string() + " (run train first)");
  if (required && !in.utilities) throw ValidationError("missing utility database " + up.string() + " (run utility-build first)");
  return in;
}

struct ReplayJob {
  const TrialInput* trial = nullptr;
  ControllerKind controller = ControllerKind::pec;
};

struct ReplayOutcome {
  TrialReport report;
  std::string log_csv;
};

inline ReplayOutcome run_job(const ReplayJob& job, const RunConfig& cfg, const ActuatorConfig& act, const ModelInputs& in) {
  ControllerConfig ctrl = cfg.controller;
  ctrl.kind = job.controller;
  const bool pec = job.controller == ControllerKind::pec;
  const auto result = replay(job.trial->trace, ctrl, act, pec ? nullptr : &*in.db, pec ? nullptr : &*in.utilities);
  return {score_trial(job.trial->id, job.trial->trace, result, job.controller, cfg.segmenter), format_log_csv(result.log)};
}

/// Runs the jobs on `workers` threads; results keep the job order.
inline std::vector<ReplayOutcome> run_jobs(const std::vector<ReplayJob>& jobs, const RunConfig& cfg, const ActuatorConfig& act,
                                           const ModelInputs& in, unsigned workers) {
  std::vector<ReplayOutcome> out(jobs.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        out[i] = run_job(jobs[i], cfg, act, in);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned n = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(jobs.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w + 1 < n; ++w) pool.emplace_back(worker);
    worker();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

inline nlohmann::json simulate_report(const RunConfig& cfg, ControllerKind kind, const std::vector<ReplayOutcome>& outcomes) {
  nlohmann::json trials = nlohmann::json::array();
  for (const auto& o : outcomes) trials.push_back(to_json(o.report));
  return {{"config", to_json(cfg)}, {"controller", to_string(kind)}, {"first_half", kFirstHalfRule}, {"trials", trials}};
}

inline nlohmann::json cmd_simulate(const RunConfig& cfg) {
  const auto kind = cfg.controller.kind;
  const auto in = load_model_inputs(cfg, kind != ControllerKind::pec);
  const auto act = effective_actuator(cfg);
  const auto trials = load_trials(cfg);
  std::vector<ReplayJob> jobs;
  for (const auto& t : trials) jobs.push_back({&t, kind});
  const auto outcomes = run_jobs(jobs, cfg, act, in, 1);
  const fs::path dir = cfg.out / "simulate" / to_string(kind);
  for (std::size_t i = 0; i < outcomes.size(); ++i) io::write_file_atomic(dir / (trials[i].id + ".csv"), outcomes[i].log_csv);
  auto report = simulate_report(cfg, kind, outcomes);
  io::write_file_atomic(dir / "report.json", dump(report));
  return report;
}

struct ClassTally {
  std::size_t trials = 0;
  std::size_t recognized = 0;
  std::size_t decision_correct = 0;
  std::size_t false_positives = 0;
  std::vector<std::size_t> false_positives_per_trial;
};

inline std::string format_peak_csv(const std::vector<ReplayOutcome>& outcomes) {
  std::string csv = "trial,label,controller,peak_tau_left_nm,peak_tau_right_nm\n";
  for (const auto& o : outcomes)
    csv += o.report.trial + ',' + o.report.label + ',' + o.report.controller + ',' + io::format_double(o.report.peak_tau_left) +
           ',' + io::format_double(o.report.peak_tau_right) + '\n';
  return csv;
}

/// Replays every trial with every configured controller and aggregates the metrics.
inline nlohmann::json cmd_evaluate(const RunConfig& cfg) {
  bool needs_models = false;
  for (auto k : cfg.evaluate_controllers) needs_models |= k != ControllerKind::pec;
  const auto in = load_model_inputs(cfg, needs_models);
  const auto act = effective_actuator(cfg);
  const auto trials = load_trials(cfg);
  std::vector<ReplayJob> jobs;
  for (auto kind : cfg.evaluate_controllers)
    for (const auto& t : trials) jobs.push_back({&t, kind});
  const auto outcomes = run_jobs(jobs, cfg, act, in, cfg.workers);

  const fs::path dir = cfg.out / "evaluate";
  for (std::size_t i = 0; i < outcomes.size(); ++i)
    io::write_file_atomic(dir / "logs" / to_string(jobs[i].controller) / (jobs[i].trial->id + ".csv"), outcomes[i].log_csv);
  io::write_file_atomic(dir / "peak_torques.csv", format_peak_csv(outcomes));

  nlohmann::json summary = nlohmann::json::object();
  nlohmann::json trial_reports = nlohmann::json::array();
  for (auto kind : cfg.evaluate_controllers) {
    std::map<std::string, ClassTally> tally;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
      if (jobs[i].controller != kind) continue;
      const auto& r = outcomes[i].report;
      auto& t = tally[r.label];
      ++t.trials;
      if (r.recognized.value_or(false)) ++t.recognized;
      if (r.decision_correct.value_or(false)) ++t.decision_correct;
      t.false_positives += r.false_positive_count;
      t.false_positives_per_trial.push_back(r.false_positive_count);
      trial_reports.push_back(to_json(r));
    }
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [label, t] : tally) {
      nlohmann::json c{{"trials", t.trials}};
      if (is_lifting(label)) {
        c["recognized"] = t.recognized;
        c["decision_correct"] = t.decision_correct;
      } else {
        c["false_positives"] = t.false_positives;
        c["false_positives_per_trial"] = t.false_positives_per_trial;
      }
      classes[label] = c;
    }
    summary[to_string(kind)] = classes;
  }
  nlohmann::json report{{"config", to_json(cfg)},
                        {"first_half", kFirstHalfRule},
                        {"summary", summary},
                        {"trials", trial_reports}};
  io::write_file_atomic(dir / "evaluation.json", dump(report));
  return report;
}

}  // namespace qpexo
