#pragma once

#include <stdexcept>
#include <vector>

#include "repsub/game.hpp"

namespace repsub {

/// Government feedback: target output y* and average subsidy per agent d.
/// d == 0 switches the subsidy off and y_star may then be empty.
struct ControlPolicy {
  Output y_star;
  double d = 0.0;

  bool active() const { return d > 0.0; }
};

/// Throws ScenarioError when the policy does not fit the scenario.
void check_policy(const Scenario& s, const ControlPolicy& policy);

/// Quantities bounding the invariant region Delta^m_eps.
struct RegionBounds {
  double a_max = 0.0;
  double a_min = 0.0;
  std::vector<double> M;  // per action; zero outside C(y*)
  double epsilon = 0.0;
};

/// The state left the domain where every f_i is finite (some y_i with
/// y*_i > 0 dropped to the singular threshold).
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kDomainThreshold = 1e-12;

/// f_i(y) = y*_i / y_i for carried targets, 0 otherwise.
double subsidy_weight(std::span<const double> y, std::span<const double> y_star, std::size_t i);

/// Continuous-limit subsidy d * f_i(y) received by one agent playing i.
double per_agent_subsidy(const ControlPolicy& policy, std::span<const double> y, std::size_t i);

/// Multipopulation replicator field without subsidies.
Derivative field_uncontrolled(const Scenario& s, const StateCombination& x);

/// Replicator field with the output-feedback subsidy. Reduces to
/// field_uncontrolled exactly when policy.d == 0.
Derivative field_controlled(const Scenario& s, const StateCombination& x, const ControlPolicy& policy);

/// ydot_i = sum_k v^k dx^k_i.
Output aggregate_rate(const Scenario& s, const Derivative& dx);

/// epsilon is placed at half of min_{i in C(y*)} M_i.
RegionBounds region_bounds(const Scenario& s, const ControlPolicy& policy);

}  // namespace repsub
