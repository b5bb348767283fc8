#pragma once

// Match distances to likelihoods, the "other" likelihood, and Bayes posteriors.

#include "qpexo/core.hpp"
#include "qpexo/dtw.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace qpexo {

/// Upper tail of a chi-square distribution with 2L degrees of freedom at D.
/// Even dof gives the Poisson-sum closed form exp(-D/2) * sum_{i<L} (D/2)^i / i!.
inline double chi2_survival(double D, std::size_t L) {
  if (L == 0) throw ValidationError("chi2_survival needs L >= 1");
  if (!(D >= 0.0)) throw ValidationError("chi2_survival needs D >= 0");
  const double x = D / 2.0;
  const double a = static_cast<double>(L);
  if (x < a) {
    // Near 1 the Poisson sum loses the last ulp; take the complement of the
    // lower tail series instead, which stays monotone in D.
    double term = 1.0, sum = 1.0;
    for (double k = 1.0; term > sum * 1e-17; k += 1.0) {
      term *= x / (a + k);
      sum += term;
    }
    const double lower = std::exp(a * std::log(x) - x - std::lgamma(a + 1.0)) * sum;
    return x == 0.0 ? 1.0 : std::clamp(1.0 - lower, 0.0, 1.0);
  }
  double term = std::exp(-x);
  double sum = term;
  for (std::size_t i = 1; i < L; ++i) {
    term *= x / static_cast<double>(i);
    sum += term;
  }
  return std::min(1.0, sum);
}

/// Likelihood of the observations under one model; invalid matches score 0.
inline double match_likelihood(const DtwMatch& m) {
  if (!m.valid) return 0.0;
  return chi2_survival(m.D, m.L);
}

/// prod_j (1 - P(obs | model_j)).
inline double likelihood_other(const std::vector<double>& likelihoods) {
  double p = 1.0;
  for (double l : likelihoods) p *= 1.0 - l;
  return p;
}

struct PosteriorEstimate {
  /// Per database model followed by "other".
  std::vector<double> likelihood;
  std::vector<double> posterior;
  /// Progress per database model; empty when the match was invalid.
  std::vector<std::optional<double>> s_curr;
  /// Grid index matching s_curr.
  std::vector<std::optional<std::size_t>> grid_curr;

  std::size_t n_models() const { return posterior.empty() ? 0 : posterior.size() - 1; }
  double p_other() const { return posterior.back(); }
};

/// Bayes' rule over aligned likelihood/prior lists. A zero evidence term
/// returns the priors unchanged.
inline std::vector<double> posterior(const std::vector<double>& likelihoods, const std::vector<double>& priors) {
  if (likelihoods.size() != priors.size()) throw ValidationError("likelihoods and priors differ in length");
  std::vector<double> out(priors.size());
  double evidence = 0.0;
  for (std::size_t j = 0; j < priors.size(); ++j) {
    out[j] = likelihoods[j] * priors[j];
    evidence += out[j];
  }
  if (!(evidence > 0.0)) return priors;
  for (double& p : out) p /= evidence;
  return out;
}

inline PosteriorEstimate estimate_posterior(const std::vector<DtwMatch>& matches, const std::vector<double>& priors) {
  PosteriorEstimate est;
  for (const auto& m : matches) {
    est.likelihood.push_back(match_likelihood(m));
    if (m.valid) {
      est.s_curr.emplace_back(m.s_curr);
      est.grid_curr.emplace_back(m.grid_curr);
    } else {
      est.s_curr.emplace_back();
      est.grid_curr.emplace_back();
    }
  }
  est.likelihood.push_back(likelihood_other(est.likelihood));
  est.posterior = posterior(est.likelihood, priors);
  return est;
}

}  // namespace qpexo
