#include "repsub/agent_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace repsub {

namespace {

// Largest-remainder apportionment of `total` items by nonnegative weights.
std::vector<std::size_t> apportion(std::span<const double> weights, std::size_t total) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> out(weights.size());
  std::vector<std::pair<double, std::size_t>> rest;
  std::size_t used = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = weights[i] / sum * static_cast<double>(total);
    out[i] = static_cast<std::size_t>(std::floor(exact));
    used += out[i];
    rest.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rest.begin(), rest.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; used < total; ++r, ++used) ++out[rest[r % rest.size()].second];
  return out;
}

std::vector<double> payoff_vector(const Scenario& s, std::size_t k, std::span<const double> y,
                                  const ControlPolicy& policy) {
  std::vector<double> pay(s.actions());
  for (std::size_t i = 0; i < pay.size(); ++i)
    pay[i] = expected_payoff(s, k, i, y) + per_agent_subsidy(policy, y, i);
  return pay;
}

}  // namespace

std::size_t AgentPopulation::membership(std::size_t agent) const {
  const auto it = std::upper_bound(begin_.begin(), begin_.end(), agent);
  return static_cast<std::size_t>(it - begin_.begin()) - 1;
}

StateCombination AgentPopulation::shares() const {
  StateCombination x(populations(), n_);
  for (std::size_t k = 0; k < populations(); ++k) {
    const double size = static_cast<double>(population_size(k));
    for (std::size_t a = begin_[k]; a < begin_[k + 1]; ++a) x(k, action_[a]) += 1.0;
    for (double& v : x.row(k)) v /= size;
  }
  return x;
}

std::vector<std::size_t> AgentPopulation::action_counts() const {
  std::vector<std::size_t> p(n_, 0);
  for (auto a : action_) ++p[a];
  return p;
}

AgentPopulation init_agents(const Scenario& s, const StateCombination& x0, std::size_t N, std::uint64_t seed) {
  check_state(s, x0);
  if (N < kMinAgents) throw ScenarioError("agents: N must be at least " + std::to_string(kMinAgents));
  const std::size_t m = s.populations();

  std::vector<std::size_t> sizes(m);
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < m; ++k) {
    sizes[k] = static_cast<std::size_t>(std::llround(s.share(k) * static_cast<double>(N)));
    assigned += sizes[k];
  }
  const auto largest = static_cast<std::size_t>(std::max_element(s.shares().begin(), s.shares().end()) - s.shares().begin());
  sizes[largest] = sizes[largest] + N - assigned;

  AgentPopulation pop;
  pop.n_ = s.actions();
  pop.seed_ = seed;
  pop.rng_.seed(seed);
  pop.begin_.push_back(0);
  for (std::size_t k = 0; k < m; ++k) {
    const auto counts = apportion(x0.row(k), sizes[k]);
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (x0(k, i) > kCarrierThreshold && counts[i] == 0)
        throw ScenarioError("agents: N = " + std::to_string(N) + " cannot represent population " +
                            std::to_string(k + 1) + "'s initial shares");
      pop.action_.insert(pop.action_.end(), counts[i], static_cast<std::uint32_t>(i));
    }
    pop.begin_.push_back(pop.action_.size());
  }
  return pop;
}

RoundStats observe(const AgentPopulation& pop, const ControlPolicy& policy) {
  RoundStats st;
  st.round = pop.rounds();
  st.model_time = pop.model_time();
  st.p = pop.action_counts();
  const double N = static_cast<double>(pop.size());
  st.empirical_y.resize(st.p.size());
  for (std::size_t i = 0; i < st.p.size(); ++i) st.empirical_y[i] = static_cast<double>(st.p[i]) / N;
  st.per_agent_subsidy.assign(st.p.size(), 0.0);
  if (!policy.active()) return st;

  st.total_subsidy = policy.d * N;
  for (std::size_t i = 0; i < st.p.size(); ++i) {
    if (policy.y_star[i] <= 0.0) continue;
    if (st.p[i] == 0)
      throw AssumptionViolation("no agent plays action " + std::to_string(i + 1) + ", which the target output carries");
    st.per_agent_subsidy[i] = st.total_subsidy * policy.y_star[i] / static_cast<double>(st.p[i]);
    st.paid_subsidy += static_cast<double>(st.p[i]) * st.per_agent_subsidy[i];
  }
  return st;
}

double imitation_scale(const Scenario& s, const ControlPolicy& policy, std::span<const double> y) {
  double f_max = 0.0;
  if (policy.active())
    for (std::size_t i = 0; i < y.size(); ++i) f_max = std::max(f_max, subsidy_weight(y, policy.y_star, i));
  return s.max_payoff() - s.min_payoff() + policy.d * f_max;
}

RoundStats run_round(AgentPopulation& pop, const Scenario& s, const ControlPolicy& policy, const AgentSimConfig& cfg) {
  RoundStats st = observe(pop, policy);
  const std::size_t m = pop.populations();
  const std::size_t n = pop.actions();
  const std::vector<std::uint32_t> snapshot = pop.action_;
  const auto& y = st.empirical_y;

  std::vector<std::vector<double>> pay(m);
  for (std::size_t k = 0; k < m; ++k) pay[k] = payoff_vector(s, k, y, policy);
  std::vector<double> f(n, 0.0);
  if (policy.active())
    for (std::size_t i = 0; i < n; ++i) f[i] = subsidy_weight(y, policy.y_star, i);

  const double scale = imitation_scale(s, policy, y);
  const double r = std::clamp(cfg.revision_prob, 0.0, 1.0);
  auto& rng = pop.rng_;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> anyone(0, pop.size() - 1);

  if (scale > 0.0 && r > 0.0) {
    std::geometric_distribution<std::size_t> gap(r);
    for (std::size_t a = r < 1.0 ? gap(rng) : 0; a < pop.size(); a += 1 + (r < 1.0 ? gap(rng) : 0)) {
      const std::size_t k = pop.membership(a);
      std::uniform_int_distribution<std::size_t> peer_pick(pop.begin(k), pop.begin(k + 1) - 1);
      const std::uint32_t i = snapshot[a];
      const std::uint32_t j = snapshot[peer_pick(rng)];
      if (i == j) continue;
      double diff;
      if (cfg.mode == PayoffMode::Expected) {
        diff = pay[k][j] - pay[k][i];
      } else {
        const auto& A = s.payoff(k);
        const double own = A(i, snapshot[anyone(rng)]) + policy.d * f[i];
        const double other = A(j, snapshot[anyone(rng)]) + policy.d * f[j];
        diff = other - own;
      }
      if (diff > 0.0 && unit(rng) * scale < diff) {
        pop.action_[a] = j;
        ++st.revisions;
      }
    }
  }
  pop.model_time_ += scale > 0.0 ? r / scale : 0.0;
  ++pop.rounds_;
  return st;
}

std::vector<RoundStats> run(AgentPopulation& pop, const Scenario& s, const ControlPolicy& policy, std::size_t rounds,
                            const AgentSimConfig& cfg) {
  check_policy(s, policy);
  std::vector<RoundStats> series;
  series.reserve(rounds + 1);
  series.push_back(observe(pop, policy));
  for (std::size_t r = 0; r < rounds; ++r) {
    const RoundStats paid = run_round(pop, s, policy, cfg);
    series.back().revisions = paid.revisions;
    series.push_back(observe(pop, policy));
  }
  return series;
}

std::vector<RoundStats> run_until(AgentPopulation& pop, const Scenario& s, const ControlPolicy& policy, double t_end,
                                  const AgentSimConfig& cfg) {
  check_policy(s, policy);
  std::vector<RoundStats> series;
  series.push_back(observe(pop, policy));
  const double before = pop.model_time();
  while (pop.model_time() < t_end) {
    const RoundStats paid = run_round(pop, s, policy, cfg);
    series.back().revisions = paid.revisions;
    series.push_back(observe(pop, policy));
    if (pop.model_time() == before) break;  // frozen clock: nothing can change
  }
  return series;
}

Derivative expected_round_drift(const Scenario& s, const StateCombination& x, const ControlPolicy& policy,
                                const AgentSimConfig& cfg) {
  const std::size_t m = x.populations();
  const std::size_t n = x.actions();
  const Output y = aggregate_output(x, s);
  const double scale = imitation_scale(s, policy, y);
  const double r = cfg.revision_prob;
  Derivative drift(m, n);
  for (std::size_t k = 0; k < m; ++k) {
    const auto pay = payoff_vector(s, k, y, policy);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        // Mass moving from i to j: revisers playing i that meet a j-player
        // and accept the switch.
        const double flow = r * x(k, i) * x(k, j) * std::max(0.0, pay[j] - pay[i]) / scale;
        drift(k, i) -= flow;
        drift(k, j) += flow;
      }
    }
  }
  return drift;
}

}  // namespace repsub
