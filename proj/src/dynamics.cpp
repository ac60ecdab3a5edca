#include "repsub/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace repsub {

void check_policy(const Scenario& s, const ControlPolicy& policy) {
  if (!std::isfinite(policy.d) || policy.d < 0.0) throw ScenarioError("policy.d: must be finite and >= 0");
  if (policy.y_star.empty()) {
    if (policy.d > 0.0) throw ScenarioError("policy.y_star: required when d > 0");
    return;
  }
  if (policy.y_star.size() != s.actions())
    throw ScenarioError("policy.y_star: expected " + std::to_string(s.actions()) + " entries");
  if (!in_simplex(policy.y_star)) throw ScenarioError("policy.y_star: not a point of the simplex");
}

double subsidy_weight(std::span<const double> y, std::span<const double> y_star, std::size_t i) {
  if (y_star[i] <= 0.0) return 0.0;
  if (!(y[i] > kDomainThreshold)) {
    std::ostringstream os;
    os << "y_" << i + 1 << " = " << y[i] << " left the subsidy domain (target share " << y_star[i] << ")";
    throw DomainError(os.str());
  }
  return y_star[i] / y[i];
}

double per_agent_subsidy(const ControlPolicy& policy, std::span<const double> y, std::size_t i) {
  if (!policy.active()) return 0.0;
  return policy.d * subsidy_weight(y, policy.y_star, i);
}

Derivative field_uncontrolled(const Scenario& s, const StateCombination& x) {
  const std::size_t m = x.populations();
  const std::size_t n = x.actions();
  const Output y = aggregate_output(x, s);
  Derivative dx(m, n);
  std::vector<double> pay(n);
  for (std::size_t k = 0; k < m; ++k) {
    auto xk = x.row(k);
    double avg = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      pay[i] = expected_payoff(s, k, i, y);
      avg += xk[i] * pay[i];
    }
    for (std::size_t i = 0; i < n; ++i) dx(k, i) = (pay[i] - avg) * xk[i];
  }
  return dx;
}

Derivative field_controlled(const Scenario& s, const StateCombination& x, const ControlPolicy& policy) {
  Derivative dx = field_uncontrolled(s, x);
  if (!policy.active()) return dx;

  const std::size_t n = x.actions();
  const Output y = aggregate_output(x, s);
  std::vector<double> f(n);
  for (std::size_t i = 0; i < n; ++i) f[i] = subsidy_weight(y, policy.y_star, i);

  for (std::size_t k = 0; k < x.populations(); ++k) {
    auto xk = x.row(k);
    double mean_f = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean_f += f[j] * xk[j];
    for (std::size_t i = 0; i < n; ++i) dx(k, i) += policy.d * xk[i] * (f[i] - mean_f);
  }
  return dx;
}

Output aggregate_rate(const Scenario& s, const Derivative& dx) {
  Output out(dx.actions(), 0.0);
  for (std::size_t k = 0; k < dx.populations(); ++k)
    for (std::size_t i = 0; i < dx.actions(); ++i) out[i] += s.share(k) * dx(k, i);
  return out;
}

RegionBounds region_bounds(const Scenario& s, const ControlPolicy& policy) {
  if (!policy.active()) throw std::invalid_argument("region_bounds requires d > 0");
  RegionBounds b;
  b.a_max = s.max_payoff();
  b.a_min = s.min_payoff();
  const double scale = policy.d / (b.a_max - b.a_min + policy.d);
  b.M.resize(policy.y_star.size());
  double smallest = INFINITY;
  for (std::size_t i = 0; i < b.M.size(); ++i) {
    b.M[i] = scale * policy.y_star[i];
    if (policy.y_star[i] > 0.0) smallest = std::min(smallest, b.M[i]);
  }
  b.epsilon = 0.5 * smallest;
  return b;
}

}  // namespace repsub
