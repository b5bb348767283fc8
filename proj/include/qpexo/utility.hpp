#pragma once

// Utility tables built from human reference data, and the expected-utility
// decision over them.

#include "qpexo/actuator.hpp"
#include "qpexo/core.hpp"
#include "qpexo/intent.hpp"
#include "qpexo/io.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace qpexo {

/// Control signal values. a1: do not lock, a2: lock both, a3: lock right, a4: lock left.
enum class Action : int { a1 = 0, a2 = 1, a3 = 2, a4 = 3 };
inline constexpr std::size_t kNumActions = 4;
inline constexpr std::array<Action, kNumActions> kActions{Action::a1, Action::a2, Action::a3, Action::a4};

inline const char* to_string(Action a) {
  static constexpr const char* names[] = {"a1", "a2", "a3", "a4"};
  return names[static_cast<int>(a)];
}

inline Action action_from_string(const std::string& s) {
  for (auto a : kActions)
    if (s == to_string(a)) return a;
  throw ParseError("unknown action '" + s + "'");
}

inline bool locks_left(Action a) { return a == Action::a2 || a == Action::a4; }
inline bool locks_right(Action a) { return a == Action::a2 || a == Action::a3; }

enum class Role { supporting, non_supporting, symmetric };

inline const char* to_string(Role r) {
  switch (r) {
    case Role::supporting: return "supporting";
    case Role::non_supporting: return "non-supporting";
    case Role::symmetric: return "symmetric";
  }
  return "?";
}

inline Role role_from_string(const std::string& s) {
  if (s == "supporting") return Role::supporting;
  if (s == "non-supporting" || s == "non_supporting") return Role::non_supporting;
  if (s == "symmetric") return Role::symmetric;
  throw ParseError("unknown role '" + s + "'");
}

/// Mean angle and torque of one hip over the progress grid.
struct ReferenceSide {
  std::vector<double> theta;  // rad
  std::vector<double> tau;    // N·m
  Role role = Role::symmetric;

  std::size_t size() const { return theta.size(); }
};

struct HumanReference {
  std::string name;
  ReferenceSide left, right;

  void validate() const {
    for (const auto* side : {&left, &right}) {
      if (side->theta.size() != kGridSize || side->tau.size() != kGridSize)
        throw ValidationError("reference '" + name + "' must cover the 101-point grid");
      for (std::size_t n = 0; n < kGridSize; ++n)
        if (!std::isfinite(side->theta[n]) || !std::isfinite(side->tau[n]))
          throw ValidationError("reference '" + name + "' has non-finite values");
    }
  }
};

/// CSV `s,theta_left_rad,theta_right_rad,tau_left_nm,tau_right_nm` on the progress grid.
inline HumanReference parse_reference_csv(std::string_view text, std::string name, Role left_role, Role right_role) {
  HumanReference ref;
  ref.name = std::move(name);
  ref.left.role = left_role;
  ref.right.role = right_role;
  auto rows = io::lines(text);
  if (rows.empty() || io::trim(rows.front()) != "s,theta_left_rad,theta_right_rad,tau_left_nm,tau_right_nm")
    throw ParseError("reference header must be s,theta_left_rad,theta_right_rad,tau_left_nm,tau_right_nm");
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (io::trim(rows[r]).empty()) continue;
    auto f = io::split(rows[r], ',');
    double v[5];
    if (f.size() != 5) throw ParseError("wrong field count @line " + std::to_string(r));
    for (int c = 0; c < 5; ++c)
      if (!io::parse_double(f[static_cast<std::size_t>(c)], v[c])) throw ParseError("malformed number @line " + std::to_string(r));
    const std::size_t n = ref.left.theta.size();
    if (std::abs(v[0] - grid_progress(n)) > 1e-9) throw ValidationError("reference progress off-grid @line " + std::to_string(r));
    ref.left.theta.push_back(v[1]);
    ref.right.theta.push_back(v[2]);
    ref.left.tau.push_back(v[3]);
    ref.right.tau.push_back(v[4]);
  }
  ref.validate();
  return ref;
}

inline std::string format_reference_csv(const HumanReference& ref) {
  std::string out = "s,theta_left_rad,theta_right_rad,tau_left_nm,tau_right_nm\n";
  for (std::size_t n = 0; n < ref.left.size(); ++n)
    out += io::format_double(grid_progress(n)) + ',' + io::format_double(ref.left.theta[n]) + ',' +
           io::format_double(ref.right.theta[n]) + ',' + io::format_double(ref.left.tau[n]) + ',' +
           io::format_double(ref.right.tau[n]) + '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Total rewards for one side

/// Locking at grid index `curr`: -sum_{n >= curr} (tau_hum - tau_exo(theta_n - theta_curr))^2.
inline double total_reward_lock(const ReferenceSide& ref, std::size_t curr, const ActuatorConfig& cfg) {
  if (curr >= ref.size()) throw ValidationError("progress index out of range");
  // Summed from the end of the grid, the order a backward recursion uses.
  double sum = 0.0;
  for (std::size_t n = ref.size(); n-- > curr;) {
    const double r = ref.tau[n] - torque(ref.theta[n] - ref.theta[curr], cfg);
    sum = r * r + sum;
  }
  return -sum;
}

/// Not locking at `curr`. A supporting (or symmetric) side is assumed to lock
/// at the next grid point; a non-supporting side is never locked.
inline double total_reward_nolock(const ReferenceSide& ref, std::size_t curr, Role role, const ActuatorConfig& cfg) {
  if (curr >= ref.size()) throw ValidationError("progress index out of range");
  double sum = 0.0;
  if (role == Role::non_supporting) {
    for (std::size_t n = ref.size(); n-- > curr;) sum = ref.tau[n] * ref.tau[n] + sum;
    return -sum;
  }
  if (curr + 1 < ref.size()) sum = -total_reward_lock(ref, curr + 1, cfg);
  return -(ref.tau[curr] * ref.tau[curr] + sum);
}

/// Per-side total-reward curves over the grid.
struct SideRewards {
  std::vector<double> lock, nolock;
};

inline SideRewards closed_form_rewards(const ReferenceSide& ref, const ActuatorConfig& cfg) {
  SideRewards out;
  out.lock.resize(ref.size());
  out.nolock.resize(ref.size());
  for (std::size_t n = 0; n < ref.size(); ++n) {
    out.lock[n] = total_reward_lock(ref, n, cfg);
    out.nolock[n] = total_reward_nolock(ref, n, ref.role, cfg);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Utility table

struct UtilityTable {
  std::vector<std::string> motions;
  /// utilities[j][a][n]
  std::vector<std::array<std::vector<double>, kNumActions>> utilities;
  std::array<double, kNumActions> u_other{};
  std::string method = "closed-form";

  double at(std::size_t motion, Action a, std::size_t n) const {
    return utilities[motion][static_cast<std::size_t>(a)][n];
  }
};

/// Sums both sides' rewards into the four action utilities of one motion.
inline std::array<std::vector<double>, kNumActions> assemble_actions(const SideRewards& left, const SideRewards& right) {
  std::array<std::vector<double>, kNumActions> u;
  const std::size_t n = left.lock.size();
  for (auto& row : u) row.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    u[0][i] = left.nolock[i] + right.nolock[i];
    u[1][i] = left.lock[i] + right.lock[i];
    u[2][i] = left.nolock[i] + right.lock[i];
    u[3][i] = left.lock[i] + right.nolock[i];
  }
  return u;
}

inline const HumanReference& find_reference(const std::vector<HumanReference>& refs, const std::string& name) {
  for (const auto& r : refs)
    if (r.name == name) return r;
  throw ValidationError("no human reference for motion '" + name + "'");
}

inline void fill_other_row(UtilityTable& table, const std::array<std::vector<double>, kNumActions>& walking) {
  for (std::size_t a = 0; a < kNumActions; ++a) {
    double lo = std::numeric_limits<double>::infinity();
    for (double v : walking[a]) lo = std::min(lo, v);
    table.u_other[a] = lo;
  }
}

/// Closed-form utilities for `motions` (in order) plus the constant "other"
/// row, taken as the per-action minimum over the walking reference.
inline UtilityTable build_utilities(const std::vector<HumanReference>& refs, const ActuatorConfig& cfg,
                                    const std::vector<std::string>& motions, const std::string& walking = "walking") {
  UtilityTable table;
  for (const auto& name : motions) {
    const auto& ref = find_reference(refs, name);
    ref.validate();
    table.motions.push_back(name);
    table.utilities.push_back(assemble_actions(closed_form_rewards(ref.left, cfg), closed_form_rewards(ref.right, cfg)));
  }
  const auto& walk = find_reference(refs, walking);
  walk.validate();
  fill_other_row(table, assemble_actions(closed_form_rewards(walk.left, cfg), closed_form_rewards(walk.right, cfg)));
  return table;
}

struct Decision {
  std::array<double, kNumActions> eu{};
  Action action = Action::a1;
};

/// Expected utility of each action; ties go to the lowest action index.
inline Decision expected_utility(const PosteriorEstimate& post, const UtilityTable& table) {
  const std::size_t models = post.n_models();
  if (models != table.motions.size()) throw ValidationError("posterior and utility table disagree on motion classes");
  Decision d;
  for (std::size_t a = 0; a < kNumActions; ++a) d.eu[a] = table.u_other[a] * post.p_other();
  for (std::size_t j = 0; j < models; ++j) {
    const double p = post.posterior[j];
    if (p == 0.0) continue;
    if (!post.grid_curr[j]) throw ValidationError("missing progress estimate for '" + table.motions[j] + "'");
    const std::size_t n = *post.grid_curr[j];
    for (std::size_t a = 0; a < kNumActions; ++a) d.eu[a] += table.utilities[j][a].at(n) * p;
  }
  std::size_t best = 0;
  for (std::size_t a = 1; a < kNumActions; ++a)
    if (d.eu[a] > d.eu[best]) best = a;
  d.action = static_cast<Action>(best);
  return d;
}

// ---------------------------------------------------------------------------
// Persistence

inline constexpr int kUtilityDbVersion = 1;

inline nlohmann::json to_json(const UtilityTable& table) {
  using nlohmann::json;
  json doc;
  doc["version"] = kUtilityDbVersion;
  doc["method"] = table.method;
  const std::size_t grid = table.utilities.empty() ? kGridSize : table.utilities.front()[0].size();
  json g = json::array();
  for (std::size_t n = 0; n < grid; ++n) g.push_back(grid_progress(n, grid));
  doc["grid"] = std::move(g);
  json motions = json::array();
  for (std::size_t j = 0; j < table.motions.size(); ++j) {
    json u = json::object();
    for (auto a : kActions) u[to_string(a)] = table.utilities[j][static_cast<std::size_t>(a)];
    motions.push_back({{"name", table.motions[j]}, {"U", std::move(u)}});
  }
  doc["motions"] = std::move(motions);
  json other = json::object();
  for (auto a : kActions) other[to_string(a)] = table.u_other[static_cast<std::size_t>(a)];
  doc["other"] = std::move(other);
  return doc;
}

inline UtilityTable utility_table_from_json(const nlohmann::json& doc) {
  try {
    if (!doc.contains("version") || doc.at("version").get<int>() != kUtilityDbVersion)
      throw ValidationError("utility db version mismatch (expected " + std::to_string(kUtilityDbVersion) + ")");
    UtilityTable table;
    table.method = doc.value("method", std::string("closed-form"));
    const std::size_t grid = doc.at("grid").size();
    for (const auto& jm : doc.at("motions")) {
      table.motions.push_back(jm.at("name").get<std::string>());
      std::array<std::vector<double>, kNumActions> u;
      for (auto a : kActions) {
        u[static_cast<std::size_t>(a)] = jm.at("U").at(to_string(a)).get<std::vector<double>>();
        if (u[static_cast<std::size_t>(a)].size() != grid) throw ValidationError("utility row does not match the grid");
        for (double v : u[static_cast<std::size_t>(a)])
          if (!std::isfinite(v)) throw ValidationError("utility table has non-finite entries");
      }
      table.utilities.push_back(std::move(u));
    }
    for (auto a : kActions) table.u_other[static_cast<std::size_t>(a)] = doc.at("other").at(to_string(a)).get<double>();
    return table;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("corrupt utility db: ") + e.what());
  }
}

inline void save_utilities(const UtilityTable& table, const std::filesystem::path& path) {
  io::write_file_atomic(path, to_json(table).dump(2) + "\n");
}

inline UtilityTable load_utilities(const std::filesystem::path& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("corrupt utility db: ") + e.what());
  }
  return utility_table_from_json(doc);
}

}  // namespace qpexo
