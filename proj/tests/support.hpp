#pragma once

// Shared fixtures for the unit suites: the three-population example game and
// random generators for property tests.

#include <random>
#include <vector>

#include "repsub/dynamics.hpp"
#include "repsub/game.hpp"

namespace repsub::testing {

inline Scenario threepop() {
  ScenarioDescription raw;
  raw.populations = {
      {0.2, {{2, 1}, {3, 4}}},
      {0.3, {{3, 1}, {2, 4}}},
      {0.5, {{3, 4}, {1, 2}}},
  };
  return validate_scenario(raw);
}

inline std::vector<double> random_simplex(std::mt19937_64& rng, std::size_t n) {
  std::exponential_distribution<double> e(1.0);
  std::vector<double> z(n);
  double sum = 0.0;
  for (double& v : z) sum += (v = e(rng));
  for (double& v : z) v /= sum;
  return z;
}

inline StateCombination random_state(std::mt19937_64& rng, std::size_t m, std::size_t n) {
  StateCombination x(m, n);
  for (std::size_t k = 0; k < m; ++k) {
    const auto z = random_simplex(rng, n);
    std::copy(z.begin(), z.end(), x.row(k).begin());
  }
  return x;
}

/// Random game with m in [m_lo, m_hi], n in [n_lo, n_hi], entries in [-5, 5].
inline Scenario random_scenario(std::mt19937_64& rng, std::size_t m_lo, std::size_t m_hi, std::size_t n_lo,
                                std::size_t n_hi) {
  std::uniform_int_distribution<std::size_t> mm(m_lo, m_hi), nn(n_lo, n_hi);
  std::uniform_real_distribution<double> entry(-5.0, 5.0);
  const std::size_t m = mm(rng);
  const std::size_t n = nn(rng);
  ScenarioDescription raw;
  // Shares bounded away from 0 and 1, renormalized so they sum to one exactly
  // enough for validation.
  std::vector<double> v(m);
  double sum = 0.0;
  for (double& s : v) sum += (s = 0.1 + std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  double acc = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    v[k] = k + 1 < m ? v[k] / sum : 1.0 - acc;
    acc += v[k];
  }
  for (std::size_t k = 0; k < m; ++k) {
    PopulationSpec p;
    p.share = v[k];
    p.payoff.assign(n, std::vector<double>(n));
    for (auto& row : p.payoff)
      for (double& a : row) a = entry(rng);
    raw.populations.push_back(std::move(p));
  }
  return validate_scenario(raw);
}

/// Target output with a random carrier (at least one action carried).
inline Output random_target(std::mt19937_64& rng, std::size_t n, double drop_prob = 0.3) {
  Output y = random_simplex(rng, n);
  std::bernoulli_distribution drop(drop_prob);
  std::uniform_int_distribution<std::size_t> keep(0, n - 1);
  const std::size_t kept = keep(rng);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i != kept && drop(rng)) y[i] = 0.0;
    sum += y[i];
  }
  for (double& v : y) v /= sum;
  return y;
}

inline double max_abs(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace repsub::testing
