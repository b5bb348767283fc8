#include "qpexo/utility.hpp"
#include "qpexo/value_iteration.hpp"

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>

using namespace qpexo;

namespace {

ActuatorConfig zero_stiffness() {
  ActuatorConfig cfg;
  cfg.stiffness_n_per_mm = 0.0;
  return cfg;
}

ReferenceSide constant_side(double theta_slope, double tau, Role role) {
  ReferenceSide side;
  side.role = role;
  for (std::size_t n = 0; n < kGridSize; ++n) {
    side.theta.push_back(theta_slope * grid_progress(n));
    side.tau.push_back(tau);
  }
  return side;
}

HumanReference zero_reference(const std::string& name) {
  HumanReference ref;
  ref.name = name;
  ref.left = constant_side(1.0, 0.0, Role::supporting);
  ref.right = constant_side(1.0, 0.0, Role::supporting);
  return ref;
}

PosteriorEstimate point_mass(std::size_t models, std::size_t j, std::size_t grid) {
  PosteriorEstimate p;
  p.posterior.assign(models + 1, 0.0);
  p.posterior[j] = 1.0;
  p.s_curr.assign(models, std::nullopt);
  p.grid_curr.assign(models, std::nullopt);
  if (j < models) {
    p.s_curr[j] = grid_progress(grid);
    p.grid_curr[j] = grid;
  }
  return p;
}

}  // namespace

TEST(RewardLock, FinalPointWithZeroTorqueContributesNothing) {
  auto side = constant_side(1.0, 5.0, Role::supporting);
  side.tau.back() = 0.0;
  EXPECT_DOUBLE_EQ(total_reward_lock(side, kGridSize - 1, ActuatorConfig{}), 0.0);
}

TEST(RewardLock, ConstantTorqueWithoutSpring) {
  auto side = constant_side(1.0, 10.0, Role::supporting);
  EXPECT_DOUBLE_EQ(total_reward_lock(side, kGridSize - 3, zero_stiffness()), -300.0);
}

TEST(RewardLock, PerfectSupportIsZero) {
  ActuatorConfig cfg;
  ReferenceSide side;
  for (std::size_t n = 0; n < kGridSize; ++n) side.theta.push_back(1.2 * grid_progress(n));
  for (std::size_t n = 0; n < kGridSize; ++n) side.tau.push_back(torque(side.theta[n] - side.theta[10], cfg));
  EXPECT_DOUBLE_EQ(total_reward_lock(side, 10, cfg), 0.0);
}

TEST(RewardLock, MatchesDirectSum) {
  const auto ref = lift_reference("squat", {});
  for (std::size_t n = 0; n < kGridSize; ++n)
    EXPECT_NEAR(total_reward_lock(ref.left, n, {}), oracle::reward_lock(ref.left, n, {}), 1e-9);
}

TEST(RewardNolock, Examples) {
  auto zero = constant_side(1.0, 0.0, Role::non_supporting);
  for (std::size_t n = 0; n < kGridSize; ++n) EXPECT_DOUBLE_EQ(total_reward_nolock(zero, n, Role::non_supporting, {}), 0.0);

  auto ten = constant_side(1.0, 10.0, Role::supporting);
  for (std::size_t n : {0u, 50u, 99u})
    EXPECT_DOUBLE_EQ(total_reward_nolock(ten, n, Role::supporting, zero_stiffness()), total_reward_lock(ten, n, zero_stiffness()));

  auto last = constant_side(1.0, 7.0, Role::supporting);
  EXPECT_DOUBLE_EQ(total_reward_nolock(last, kGridSize - 1, Role::supporting, {}), -49.0);
  EXPECT_THROW(total_reward_nolock(last, kGridSize, Role::supporting, {}), ValidationError);
}

TEST(BuildUtilities, AllZeroReferences) {
  std::vector<HumanReference> refs{zero_reference("squat"), zero_reference("walking")};
  auto t = build_utilities(refs, zero_stiffness(), {"squat"});
  for (const auto& row : t.utilities[0])
    for (double v : row) EXPECT_DOUBLE_EQ(v, 0.0);
  for (double v : t.u_other) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(BuildUtilities, StoopLeftPrefersNotLockingNonSupportingSide) {
  auto ref = lift_reference("stoop_left", {});
  std::fill(ref.right.tau.begin(), ref.right.tau.end(), 0.0);
  auto walking = walking_reference({});
  auto t = build_utilities({ref, walking}, {}, {"stoop_left"});
  EXPECT_GT(t.at(0, Action::a1, 0), t.at(0, Action::a3, 0));
  EXPECT_GT(t.at(0, Action::a1, 0), t.at(0, Action::a2, 0));
}

TEST(BuildUtilities, OtherRowIsWalkingMinimum) {
  const auto& t = fixture::utilities();
  const auto walk = walking_reference({});
  const auto u = assemble_actions(closed_form_rewards(walk.left, {}), closed_form_rewards(walk.right, {}));
  for (std::size_t a = 0; a < kNumActions; ++a) EXPECT_DOUBLE_EQ(t.u_other[a], *std::min_element(u[a].begin(), u[a].end()));
  EXPECT_THROW(build_utilities({zero_reference("squat")}, {}, {"squat"}), ValidationError);
}

TEST(BuildUtilities, MatchesValueIteration) {
  const auto refs = fixture::references();
  const auto closed = build_utilities(refs, {}, kLiftClasses);
  const auto vi = build_utilities_vi(refs, {}, kLiftClasses);
  for (std::size_t j = 0; j < kLiftClasses.size(); ++j)
    for (std::size_t a = 0; a < kNumActions; ++a)
      for (std::size_t n = 0; n < kGridSize; ++n) EXPECT_NEAR(closed.utilities[j][a][n], vi.utilities[j][a][n], 1e-9);
}

TEST(ExpectedUtility, PointMassOnMotion) {
  const auto& t = fixture::utilities();
  auto d = expected_utility(point_mass(3, 0, 42), t);
  for (std::size_t a = 0; a < kNumActions; ++a) EXPECT_DOUBLE_EQ(d.eu[a], t.utilities[0][a][42]);
}

TEST(ExpectedUtility, PointMassOnOtherSelectsNoLock) {
  auto d = expected_utility(point_mass(3, 3, 0), fixture::utilities());
  EXPECT_EQ(d.action, Action::a1);
}

TEST(ExpectedUtility, ShiftDoesNotChangeArgmax) {
  auto t = fixture::utilities();
  PosteriorEstimate p = point_mass(3, 0, 30);
  p.posterior = {0.4, 0.3, 0.2, 0.1};
  p.grid_curr = {30, 35, 28};
  p.s_curr = {0.30, 0.35, 0.28};
  const auto before = expected_utility(p, t).action;
  for (auto& m : t.utilities)
    for (auto& row : m)
      for (auto& v : row) v += 12345.0;
  for (auto& v : t.u_other) v += 12345.0;
  EXPECT_EQ(expected_utility(p, t).action, before);
}

TEST(ExpectedUtility, MissingProgressThrows) {
  auto p = point_mass(3, 0, 10);
  p.grid_curr[0].reset();
  EXPECT_THROW(expected_utility(p, fixture::utilities()), ValidationError);
}

TEST(UtilityDb, RoundTrip) {
  const auto& t = fixture::utilities();
  const auto path = std::filesystem::path(::testing::TempDir()) / "utility_roundtrip.json";
  save_utilities(t, path);
  auto back = load_utilities(path);
  EXPECT_EQ(back.motions, t.motions);
  EXPECT_EQ(back.u_other, t.u_other);
  EXPECT_EQ(back.utilities, t.utilities);
}

TEST(References, ParseRejectsOffGridRows) {
  const auto ref = lift_reference("squat", {});
  auto text = format_reference_csv(ref);
  auto back = parse_reference_csv(text, "squat", Role::symmetric, Role::symmetric);
  EXPECT_EQ(back.left.tau, ref.left.tau);
  auto bad = text;
  bad.replace(bad.find("\n0.01,"), 6, "\n0.02,");
  EXPECT_THROW(parse_reference_csv(bad, "squat", Role::symmetric, Role::symmetric), ValidationError);
}
