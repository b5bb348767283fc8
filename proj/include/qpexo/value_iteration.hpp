#pragma once

// Finite MDP over one actuator side following a human reference motion.
// Q-functions are computed by Bellman sweeps and reduced to the total-reward
// curves q(s, u) = Q(unlocked, theta_lock = 0, s, u).
//
// The lock-angle domain holds only reachable values: index 0 is theta_lock = 0
// (unlocked), index k + 1 is theta_hum(s_k).

#include "qpexo/actuator.hpp"
#include "qpexo/core.hpp"
#include "qpexo/utility.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

namespace qpexo {

struct ExoMdpState {
  int locked = 0;             // 0 or 1
  std::size_t lock_index = 0; // 0 when unlocked, k + 1 for theta_hum(s_k)
  std::size_t progress = 0;   // grid index

  bool operator==(const ExoMdpState&) const = default;
};

/// u = 0 keeps the locking status, u = 1 engages the lock.
enum class LockInput : int { keep = 0, engage = 1 };

inline double lock_angle(const ReferenceSide& ref, std::size_t lock_index) {
  return lock_index == 0 ? 0.0 : ref.theta[lock_index - 1];
}

inline double deflection(const ExoMdpState& x, const ReferenceSide& ref) {
  return ref.theta[x.progress] - lock_angle(ref, x.lock_index);
}

inline ExoMdpState transition(const ExoMdpState& x, LockInput u, const ReferenceSide& ref) {
  const std::size_t last = ref.size() - 1;
  ExoMdpState next;
  next.progress = x.progress >= last ? last : x.progress + 1;
  if (x.locked == 0) {
    if (u == LockInput::engage) {
      next.locked = 1;
      next.lock_index = x.progress + 1;
    }
  } else if (deflection(x, ref) < 0.0) {
    next.locked = 0;
    next.lock_index = 0;
  } else {
    next.locked = 1;
    next.lock_index = x.lock_index;
  }
  return next;
}

/// Negated squared residual human torque.
inline double instantaneous_reward(const ExoMdpState& x, const ReferenceSide& ref, const ActuatorConfig& cfg) {
  double residual = ref.tau[x.progress];
  if (x.locked == 1) residual -= torque(deflection(x, ref), cfg);
  return -residual * residual;
}

class QTable {
 public:
  explicit QTable(std::size_t grid) : grid_(grid), q_(2 * (grid + 1) * grid * 2, 0.0) {}

  double& operator()(const ExoMdpState& x, LockInput u) { return q_[index(x, u)]; }
  double operator()(const ExoMdpState& x, LockInput u) const { return q_[index(x, u)]; }

  double value(const ExoMdpState& x) const {
    return std::max((*this)(x, LockInput::keep), (*this)(x, LockInput::engage));
  }

  std::size_t grid() const { return grid_; }
  double discount = 1.0;

 private:
  std::size_t index(const ExoMdpState& x, LockInput u) const {
    return ((static_cast<std::size_t>(x.locked) * (grid_ + 1) + x.lock_index) * grid_ + x.progress) * 2 +
           static_cast<std::size_t>(u);
  }

  std::size_t grid_;
  std::vector<double> q_;
};

/// Calls f on every state that respects the invariants (unlocked => index 0).
template <typename F>
void for_each_state(std::size_t grid, F&& f) {
  for (std::size_t n = grid; n-- > 0;) {
    f(ExoMdpState{0, 0, n});
    for (std::size_t k = 1; k <= grid; ++k) f(ExoMdpState{1, k, n});
  }
}

struct ValueIterationResult {
  QTable q;
  std::vector<double> q_keep;    // q(s, u = 0)
  std::vector<double> q_engage;  // q(s, u = 1)
};

/// Bellman sweeps ordered by decreasing progress. The last grid point is
/// absorbing and contributes its reward once.
inline ValueIterationResult value_iterate(const ReferenceSide& ref, const ActuatorConfig& cfg, double discount = 1.0,
                                          std::size_t sweeps = kGridSize) {
  const std::size_t grid = ref.size();
  if (grid == 0 || ref.tau.size() != grid) throw ValidationError("reference side is empty or inconsistent");
  ValueIterationResult out{QTable(grid), {}, {}};
  out.q.discount = discount;
  for (std::size_t sweep = 0; sweep < sweeps; ++sweep) {
    for_each_state(grid, [&](const ExoMdpState& x) {
      const double rho = instantaneous_reward(x, ref, cfg);
      for (auto u : {LockInput::keep, LockInput::engage}) {
        if (x.progress + 1 == grid) {
          out.q(x, u) = rho;
        } else {
          out.q(x, u) = rho + discount * out.q.value(transition(x, u, ref));
        }
      }
    });
  }
  out.q_keep.resize(grid);
  out.q_engage.resize(grid);
  for (std::size_t n = 0; n < grid; ++n) {
    out.q_keep[n] = out.q(ExoMdpState{0, 0, n}, LockInput::keep);
    out.q_engage[n] = out.q(ExoMdpState{0, 0, n}, LockInput::engage);
  }
  return out;
}

/// Largest |Q - (rho + discount * max Q')| over all states and inputs.
inline double bellman_residual(const QTable& q, const ReferenceSide& ref, const ActuatorConfig& cfg) {
  const std::size_t grid = q.grid();
  double worst = 0.0;
  for_each_state(grid, [&](const ExoMdpState& x) {
    const double rho = instantaneous_reward(x, ref, cfg);
    for (auto u : {LockInput::keep, LockInput::engage}) {
      const double target = x.progress + 1 == grid ? rho : rho + q.discount * q.value(transition(x, u, ref));
      worst = std::max(worst, std::abs(q(x, u) - target));
    }
  });
  return worst;
}

inline SideRewards value_iteration_rewards(const ReferenceSide& ref, const ActuatorConfig& cfg) {
  auto vi = value_iterate(ref, cfg);
  return {std::move(vi.q_engage), std::move(vi.q_keep)};
}

/// Same table as build_utilities, with every per-side curve taken from value
/// iteration instead of the closed-form rewards.
inline UtilityTable build_utilities_vi(const std::vector<HumanReference>& refs, const ActuatorConfig& cfg,
                                       const std::vector<std::string>& motions, const std::string& walking = "walking") {
  UtilityTable table;
  table.method = "value-iteration";
  for (const auto& name : motions) {
    const auto& ref = find_reference(refs, name);
    ref.validate();
    table.motions.push_back(name);
    table.utilities.push_back(assemble_actions(value_iteration_rewards(ref.left, cfg), value_iteration_rewards(ref.right, cfg)));
  }
  const auto& walk = find_reference(refs, walking);
  walk.validate();
  fill_other_row(table, assemble_actions(value_iteration_rewards(walk.left, cfg), value_iteration_rewards(walk.right, cfg)));
  return table;
}

}  // namespace qpexo
