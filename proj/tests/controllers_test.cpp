#include "qpexo/controllers.hpp"

#include "support/fixtures.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace qpexo;

namespace {

VelocityEstimate with_velocity(double l, double r) {
  VelocityEstimate v = kalman_init({0.0, 0.0});
  v.joints[0].x(1) = l;
  v.joints[1].x(1) = r;
  return v;
}

/// Feeds a mean-replay trace through a control loop and returns the actions.
std::vector<Action> run_loop(ControlLoop& loop, const MotionTrace& trace) {
  std::vector<Action> out;
  for (const auto& s : trace.samples) out.push_back(loop.tick(s.t, s.q).action);
  return out;
}

std::optional<Action> first_non_a1(const std::vector<Action>& actions) {
  for (auto a : actions)
    if (a != Action::a1) return a;
  return std::nullopt;
}

}  // namespace

TEST(Pec, ThresholdOnBothHips) {
  EXPECT_EQ(pec_tick(with_velocity(1.2, 1.5)), Action::a2);
  EXPECT_EQ(pec_tick(with_velocity(1.2, 0.5)), Action::a1);
  EXPECT_EQ(pec_tick(with_velocity(0.0, 0.0)), Action::a1);
  EXPECT_EQ(pec_tick(with_velocity(-1.2, -1.5)), Action::a1);
  EXPECT_EQ(pec_tick(with_velocity(-1.2, -1.5), 1.0, true), Action::a2);
}

TEST(Kalman, ConstantInputSettles) {
  VelocityEstimate est;
  for (int k = 0; k < 100; ++k) est = kalman_update(est, {0.4, -0.2}, 0.01);
  EXPECT_LT(std::abs(est.omega_left()), 0.01);
  EXPECT_LT(std::abs(est.omega_right()), 0.01);
}

TEST(Kalman, TracksRamp) {
  VelocityEstimate est;
  for (int k = 0; k <= 50; ++k) est = kalman_update(est, {0.01 * k, 0.02 * k}, 0.01);
  EXPECT_NEAR(est.omega_left(), 1.0, 0.05);
  EXPECT_NEAR(est.omega_right(), 2.0, 0.10);
}

TEST(Kalman, OutlierResponseDecays) {
  VelocityEstimate est;
  for (int k = 0; k < 100; ++k) est = kalman_update(est, {0.0, 0.0}, 0.01);
  est = kalman_update(est, {0.05, 0.0}, 0.01);
  EXPECT_GT(est.omega_left(), 0.0);
  // The sample after the outlier undoes the jump; from there on |omega| shrinks every tick.
  est = kalman_update(est, {0.0, 0.0}, 0.01);
  double prev = std::abs(est.omega_left());
  for (int k = 0; k < 60; ++k) {
    est = kalman_update(est, {0.0, 0.0}, 0.01);
    EXPECT_LT(std::abs(est.omega_left()), prev) << k;
    prev = std::abs(est.omega_left());
  }
  EXPECT_LT(std::abs(est.omega_left()), 1e-3);
  EXPECT_THROW(kalman_update(est, {0, 0}, 0.0), ValidationError);
}

TEST(Hold, SingleLeftLock) {
  std::vector<Action> sig(60, Action::a1);
  sig[5] = Action::a4;
  auto cmd = lowlevel_hold(sig);
  for (int k = 0; k < 60; ++k) {
    EXPECT_EQ(cmd[k].first, k >= 5 && k <= 34) << k;
    EXPECT_FALSE(cmd[k].second);
  }
}

TEST(Hold, IdleStaysLow) {
  for (auto [l, r] : lowlevel_hold(std::vector<Action>(500, Action::a1))) {
    EXPECT_FALSE(l);
    EXPECT_FALSE(r);
  }
}

TEST(Hold, ReassertionRestartsHold) {
  std::vector<Action> sig(80, Action::a1);
  const int k = 7;
  sig[k] = Action::a3;
  sig[k + 10] = Action::a2;
  auto cmd = lowlevel_hold(sig);
  for (int i = 0; i < 80; ++i) {
    EXPECT_EQ(cmd[i].second, i >= k && i <= k + 39) << i;
    EXPECT_EQ(cmd[i].first, i >= k + 10 && i <= k + 39) << i;
  }
}

TEST(Umc, StationaryWindowDoesNotLock) {
  const auto& db = fixture::db();
  ObservationWindow w;
  for (int i = 0; i < 30; ++i) {
    w.obs.push_back({0.3, 0.25});
    w.t.push_back(0.01 * i);
  }
  auto out = umc_tick(w, db, fixture::utilities());
  EXPECT_FALSE(out.fault);
  EXPECT_EQ(out.action, Action::a1);
  for (const auto& m : out.matches) EXPECT_FALSE(m.valid);
  EXPECT_DOUBLE_EQ(out.posterior.p_other(), 1.0);
}

TEST(Umc, PartialWindowFaultsToNoLock) {
  ObservationWindow w;
  w.obs = {Vec2(0.1, 0.1)};
  w.t = {0.0};
  auto out = umc_tick(w, fixture::db(), fixture::utilities());
  EXPECT_TRUE(out.fault);
  EXPECT_EQ(out.action, Action::a1);
}

TEST(Umc, SquatMeanLocksBothSidesFirst) {
  const auto& db = fixture::db();
  ControllerConfig cfg;
  cfg.kind = ControllerKind::umc;
  ControlLoop loop(cfg, &db, &fixture::utilities());
  const auto trace = fixture::mean_trace(*db.find("squat"));
  auto actions = run_loop(loop, trace);
  auto first = std::find_if(actions.begin(), actions.end(), [](Action a) { return a != Action::a1; });
  ASSERT_NE(first, actions.end());
  EXPECT_EQ(*first, Action::a2);
  // Within the first half of the flexion: 1.0 s standing plus 0.5 s.
  EXPECT_LE(trace.samples[static_cast<std::size_t>(first - actions.begin())].t, 1.5);
}

TEST(Umc, StoopLeftMeanLocksLeftFirst) {
  const auto& db = fixture::db();
  ControllerConfig cfg;
  cfg.kind = ControllerKind::umc;
  ControlLoop loop(cfg, &db, &fixture::utilities());
  EXPECT_EQ(first_non_a1(run_loop(loop, fixture::mean_trace(*db.find("stoop_left")))), Action::a4);
}

TEST(Eumc, RequiresCalibration) {
  EumcState state;
  EXPECT_THROW(eumc_tick(state, 0.0, {0.0, 0.0}, fixture::db(), fixture::utilities(), {}), ValidationError);
}

TEST(Eumc, CalibrationMapsRestToModelRest) {
  const auto& db = fixture::db();
  std::vector<Vec2> standing(100, Vec2(0.12, 0.02));
  auto c = capture_calibration(standing, db);
  EXPECT_TRUE(c.captured);
  Vec2 rest = Vec2::Zero();
  for (const auto& m : db.models) rest += m.mean.front();
  rest /= 3.0;
  EXPECT_NEAR((c.apply({0.12, 0.02}) - rest).norm(), 0.0, 1e-12);
  EXPECT_NEAR((c.apply({0.52, 0.42}) - rest - Vec2(0.4, 0.4)).norm(), 0.0, 1e-12);
  EXPECT_THROW(capture_calibration(std::span<const Vec2>{}, db), ValidationError);
}

TEST(Eumc, GatedWalkingNeverLocks) {
  const auto& db = fixture::db();
  ControlLoop loop(ControllerConfig{}, &db, &fixture::utilities());
  auto rng = trace_rng(99, 3, 0, 0);
  const auto walk = generate_walking(rng, {});
  for (auto a : run_loop(loop, walk)) EXPECT_EQ(a, Action::a1);
}

TEST(Eumc, SameDecisionAsUmcOnLift) {
  const auto& db = fixture::db();
  for (const auto& label : kLiftClasses) {
    const auto trace = fixture::mean_trace(*db.find(label));
    ControllerConfig ucfg;
    ucfg.kind = ControllerKind::umc;
    ControlLoop umc(ucfg, &db, &fixture::utilities());
    ControlLoop eumc(ControllerConfig{}, &db, &fixture::utilities());
    std::size_t evaluated_outside_gate = 0;
    std::vector<Action> e;
    for (const auto& s : trace.samples) {
      auto out = eumc.tick(s.t, s.q);
      if (out.umc && !out.gate) ++evaluated_outside_gate;
      e.push_back(out.action);
    }
    EXPECT_EQ(evaluated_outside_gate, 0u);
    EXPECT_EQ(first_non_a1(e), first_non_a1(run_loop(umc, trace))) << label;
  }
}

TEST(ControlLoop, ConfigurationChecks) {
  ControllerConfig cfg;
  EXPECT_THROW(ControlLoop(cfg, nullptr, nullptr), ConfigError);
  cfg.kind = ControllerKind::pec;
  EXPECT_NO_THROW(ControlLoop(cfg, nullptr, nullptr));
  auto u = fixture::utilities();
  std::swap(u.motions[0], u.motions[1]);
  cfg.kind = ControllerKind::umc;
  EXPECT_THROW(ControlLoop(cfg, &fixture::db(), &u), ConfigError);
  EXPECT_THROW(controller_from_string("mpc"), ConfigError);
  EXPECT_EQ(controller_from_string("eumc"), ControllerKind::eumc);
  cfg.umc_rate_hz = 1000.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(ControlLoop, UmcEvaluatesAtTenHertz) {
  const auto& db = fixture::db();
  ControllerConfig cfg;
  cfg.kind = ControllerKind::umc;
  ControlLoop loop(cfg, &db, &fixture::utilities());
  std::vector<long> evaluated;
  for (long k = 0; k < 200; ++k)
    if (loop.tick(0.01 * k, {0.05, 0.05}).umc) evaluated.push_back(k);
  ASSERT_FALSE(evaluated.empty());
  EXPECT_GE(evaluated.front(), 29);
  for (std::size_t i = 1; i < evaluated.size(); ++i) EXPECT_EQ(evaluated[i] - evaluated[i - 1], 10);
}
