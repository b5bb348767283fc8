#include "qpexo/intent.hpp"

#include "support/oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace qpexo;

TEST(Chi2Survival, ClosedFormValues) {
  for (std::size_t L : {1u, 3u, 30u}) EXPECT_DOUBLE_EQ(chi2_survival(0.0, L), 1.0);
  EXPECT_NEAR(chi2_survival(2.0, 1), std::exp(-1.0), 1e-15);
  // e^-3.75 (1 + 3.75 + 3.75^2 / 2)
  EXPECT_NEAR(chi2_survival(7.5, 3), 0.2770684433661, 1e-12);
}

TEST(Chi2Survival, MatchesNumericalIntegration) {
  EXPECT_NEAR(chi2_survival(7.5, 3), oracle::chi2_tail_numeric(7.5, 3), 1e-8);
  for (double D : {0.5, 3.0, 12.0, 40.0, 95.0, 160.0})
    for (std::size_t L : {1u, 2u, 7u, 15u, 30u}) EXPECT_NEAR(chi2_survival(D, L), oracle::chi2_tail_numeric(D, L), 1e-8) << D << " " << L;
}

TEST(Chi2Survival, RejectsBadArguments) {
  EXPECT_THROW(chi2_survival(1.0, 0), ValidationError);
  EXPECT_THROW(chi2_survival(-1.0, 2), ValidationError);
}

TEST(Chi2Survival, DecreasesInDistanceIncreasesInLength) {
  for (std::size_t L = 1; L <= 30; ++L)
    for (double D = 0.0; D < 150.0; D += 1.5) {
      EXPECT_GE(chi2_survival(D, L), chi2_survival(D + 1.5, L));
      EXPECT_LE(chi2_survival(D, L), chi2_survival(D, L + 1));
    }
}

TEST(LikelihoodOther, Examples) {
  EXPECT_DOUBLE_EQ(likelihood_other({0.0, 0.0, 0.0}), 1.0);
  EXPECT_NEAR(likelihood_other({0.8, 0.2, 0.0}), 0.16, 1e-15);
  EXPECT_DOUBLE_EQ(likelihood_other({0.3, 1.0, 0.5}), 0.0);
}

TEST(Posterior, HandComputedExample) {
  auto p = posterior({0.8, 0.2, 0.0, 0.16}, std::vector<double>(4, 0.25));
  EXPECT_NEAR(p[0], 0.8 / 1.16, 1e-12);
  EXPECT_NEAR(p[0], 0.6897, 5e-5);
  EXPECT_NEAR(p[3], 0.16 / 1.16, 1e-12);
}

TEST(Posterior, DegenerateCases) {
  const std::vector<double> priors{0.1, 0.2, 0.3, 0.4};
  auto one = posterior({0.0, 1.0, 0.0, 0.0}, priors);
  EXPECT_DOUBLE_EQ(one[1], 1.0);
  EXPECT_EQ(posterior({0.0, 0.0, 0.0, 0.0}, priors), priors);
  EXPECT_THROW(posterior({0.5}, priors), ValidationError);
}

TEST(Posterior, NormalizedAndScaleInvariant) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0), scale(1e-3, 1e3);
  for (int k = 0; k < 2000; ++k) {
    std::vector<double> l(4), pr(4);
    for (auto& v : l) v = u(rng);
    for (auto& v : pr) v = u(rng) + 1e-6;
    double sp = 0.0;
    for (double v : pr) sp += v;
    for (auto& v : pr) v /= sp;
    auto p = posterior(l, pr);
    double sum = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      sum += v;
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    const double c = scale(rng);
    auto scaled = l;
    for (auto& v : scaled) v *= c;
    auto q = posterior(scaled, pr);
    EXPECT_EQ(std::max_element(p.begin(), p.end()) - p.begin(), std::max_element(q.begin(), q.end()) - q.begin());
  }
}

TEST(EstimatePosterior, InvalidMatchesScoreZero) {
  DtwMatch good, bad;
  good.valid = true;
  good.D = 2.0;
  good.L = 1;
  good.s_curr = 0.3;
  good.grid_curr = 30;
  bad.valid = false;
  bad.D = 0.0;
  bad.L = 5;
  auto est = estimate_posterior({good, bad}, std::vector<double>(3, 1.0 / 3.0));
  ASSERT_EQ(est.n_models(), 2u);
  EXPECT_DOUBLE_EQ(est.likelihood[1], 0.0);
  EXPECT_NEAR(est.likelihood[0], std::exp(-1.0), 1e-15);
  EXPECT_NEAR(est.likelihood[2], 1.0 - std::exp(-1.0), 1e-15);
  EXPECT_FALSE(est.s_curr[1].has_value());
  EXPECT_EQ(*est.grid_curr[0], 30u);
  EXPECT_NEAR(est.posterior[0] + est.posterior[1] + est.p_other(), 1.0, 1e-12);
}
