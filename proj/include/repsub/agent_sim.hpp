#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <vector>

#include "repsub/dynamics.hpp"
#include "repsub/game.hpp"

namespace repsub {

/// A carried target action has no players, so its subsidy is undefined.
class AssumptionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PayoffMode {
  Expected,      // payoff against the empirical output
  SampledMatch,  // payoff from one match with a uniformly drawn opponent
};

struct AgentSimConfig {
  /// Probability that a given agent revises in one round (rate * dt).
  double revision_prob = 0.05;
  PayoffMode mode = PayoffMode::Expected;
};

struct RoundStats;
class AgentPopulation;

AgentPopulation init_agents(const Scenario& s, const StateCombination& x0, std::size_t N, std::uint64_t seed);
RoundStats run_round(AgentPopulation& pop, const Scenario& s, const ControlPolicy& policy,
                     const AgentSimConfig& cfg);

/// Finite population of agents. Agents of population k occupy the index
/// range [begin(k), begin(k+1)); membership never changes.
class AgentPopulation {
 public:
  std::size_t size() const { return action_.size(); }
  std::size_t populations() const { return begin_.size() - 1; }
  std::size_t actions() const { return n_; }
  std::size_t begin(std::size_t k) const { return begin_[k]; }
  std::size_t population_size(std::size_t k) const { return begin_[k + 1] - begin_[k]; }
  std::size_t membership(std::size_t agent) const;
  std::uint32_t action(std::size_t agent) const { return action_[agent]; }
  std::uint64_t seed() const { return seed_; }

  /// Elapsed time on the mean-field clock.
  double model_time() const { return model_time_; }
  std::size_t rounds() const { return rounds_; }

  /// Per-population empirical shares.
  StateCombination shares() const;
  /// Agents playing each action, over all populations.
  std::vector<std::size_t> action_counts() const;

 private:
  friend AgentPopulation init_agents(const Scenario&, const StateCombination&, std::size_t, std::uint64_t);
  friend RoundStats run_round(AgentPopulation&, const Scenario&, const ControlPolicy&, const AgentSimConfig&);

  std::size_t n_ = 0;
  std::vector<std::size_t> begin_;
  std::vector<std::uint32_t> action_;
  std::uint64_t seed_ = 0;
  std::mt19937_64 rng_;
  double model_time_ = 0.0;
  std::size_t rounds_ = 0;
};

struct RoundStats {
  std::size_t round = 0;
  double model_time = 0.0;
  Output empirical_y;
  std::vector<std::size_t> p;            // agents per action
  double total_subsidy = 0.0;            // D = d N
  std::vector<double> per_agent_subsidy;  // D y*_i / p_i
  double paid_subsidy = 0.0;             // sum_i p_i * per_agent_subsidy[i]
  std::size_t revisions = 0;
};

inline constexpr std::size_t kMinAgents = 100;

/// Population sizes round v^k N to nearest (remainder to the largest
/// population); action counts use largest-remainder rounding of x0.
AgentPopulation init_agents(const Scenario& s, const StateCombination& x0, std::size_t N, std::uint64_t seed);

/// Statistics of the current state, with the subsidy the government would pay.
RoundStats observe(const AgentPopulation& pop, const ControlPolicy& policy);

/// One synchronous round of proportional imitation. Returns the statistics
/// of the start-of-round snapshot the agents reacted to.
RoundStats run_round(AgentPopulation& pop, const Scenario& s, const ControlPolicy& policy,
                     const AgentSimConfig& cfg);

/// Initial statistics followed by one entry after each round.
std::vector<RoundStats> run(AgentPopulation& pop, const Scenario& s, const ControlPolicy& policy,
                            std::size_t rounds, const AgentSimConfig& cfg);

/// Rounds until the mean-field clock reaches t_end.
std::vector<RoundStats> run_until(AgentPopulation& pop, const Scenario& s, const ControlPolicy& policy,
                                  double t_end, const AgentSimConfig& cfg);

/// Normalization making every imitation probability at most one:
/// a_max - a_min + d * max_i f_i(y).
double imitation_scale(const Scenario& s, const ControlPolicy& policy, std::span<const double> y);

/// Expected one-round change of the per-population shares under the
/// expected-payoff protocol, summed over every (revising agent, peer) pair.
Derivative expected_round_drift(const Scenario& s, const StateCombination& x, const ControlPolicy& policy,
                                const AgentSimConfig& cfg);

}  // namespace repsub
