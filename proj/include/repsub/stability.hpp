#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "repsub/dynamics.hpp"
#include "repsub/game.hpp"
#include "repsub/integrator.hpp"

namespace repsub {

/// Element of X* = X-hat ∩ X-bar: an equilibrium of the uncontrolled field
/// whose output equals the target.
struct TargetEquilibrium {
  StateCombination x_star;
  Output y_star;
  std::vector<std::vector<std::size_t>> carriers;  // C(x^{k*}) per population

  static TargetEquilibrium make(StateCombination x_star, Output y_star);
};

/// Thrown when the stabilization condition cannot be evaluated at all.
class InapplicableError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LyapunovTerms {
  double F1 = 0.0;
  double F2 = 0.0;
  double Vdot = 0.0;
};

/// sum_k sum_{i in C(x^{k*})} -v^k x^{k*}_i log(x^k_i / x^{k*}_i).
/// Returns +infinity when a carried coordinate of x is zero.
double lyapunov_V(const StateCombination& x, const TargetEquilibrium& eq, const Scenario& s);

/// Vdot = -F1 - d F2 along the controlled field.
LyapunovTerms decompose_vdot(const StateCombination& x, const TargetEquilibrium& eq, const Scenario& s,
                             const ControlPolicy& policy);

/// Payoff-advantage term F1(x) = sum_k v^k {u^k(x^{k*}, y) - u^k(x^k, y)}.
double lyapunov_f1(const StateCombination& x, const TargetEquilibrium& eq, const Scenario& s);

/// Subsidy term F2 in its defining form sum_{i in C(y*)} (y*_i - y_i) y*_i / y_i.
double lyapunov_f2(std::span<const double> y, std::span<const double> y_star);

/// Gain bound -F1/F2; nullopt when F2 < 1e-12 (x is effectively in X-bar).
std::optional<double> d_bar(const StateCombination& x, const TargetEquilibrium& eq, const Scenario& s);

/// Attach to simulate() to record V, Vdot, F1, F2 per step.
Observer make_lyapunov_observer(const TargetEquilibrium& eq, const Scenario& s, const ControlPolicy& policy);

struct SamplingConfig {
  std::size_t grid_per_dim = 21;
  std::size_t random_samples = 100000;
  std::size_t ascent_iters = 200;
  std::size_t ascent_starts = 10;
  std::size_t xbar_samples = 10000;
  std::size_t xbar_burn_in = 1000;
  std::uint64_t seed = 1;
  double tube_radius = 1e-6;      // excluded neighbourhood of X-bar in |y - y*|_inf
  double boundary_margin = 1e-6;  // excluded band y_i < margin for i in C(y*)
};

struct SupEstimate {
  double value = -INFINITY;
  StateCombination argmax;
  std::size_t grid_points = 0;
  std::size_t random_points = 0;
  std::size_t ascent_evaluations = 0;
  std::size_t excluded = 0;
  std::uint64_t seed = 0;
};

SupEstimate estimate_sup_dbar(const TargetEquilibrium& eq, const Scenario& s, const SamplingConfig& cfg);

struct F1Check {
  double f1_min = INFINITY;
  StateCombination witness;
  std::size_t vertices = 0;
  std::size_t samples = 0;
  std::size_t dimension = 0;  // affine dimension of X-bar
};

/// Minimum of F1 over X-bar from its vertices plus hit-and-run samples.
/// Throws InapplicableError when X-bar is empty.
F1Check check_f1_on_xbar(const TargetEquilibrium& eq, const Scenario& s, std::size_t samples,
                         std::uint64_t seed, std::size_t burn_in = 1000);

/// Vertices of {x in Delta^m : sum_k v^k x^k = y*} restricted to supports.
/// supports[k] lists the actions population k may use.
std::vector<StateCombination> polytope_vertices(const Scenario& s, std::span<const double> y_star,
                                                const std::vector<std::vector<std::size_t>>& supports);

/// X* candidates. A continuum is reported through its vertices, so more
/// than one entry means X* is not a singleton. Empty when X* is empty.
std::vector<TargetEquilibrium> find_target_equilibria(const Scenario& s, const Output& y_star);

/// Max-norm of the field at x; zero at equilibria.
double field_residual(const Scenario& s, const StateCombination& x, const ControlPolicy& policy);

/// Eigenvalues of the field's Jacobian in reduced coordinates (last action
/// of each population eliminated), by central differences.
std::vector<std::complex<double>> jacobian_eigenvalues(const Scenario& s, const ControlPolicy& policy,
                                                       const StateCombination& x, double h = 1e-6);

struct StabilityReport {
  Output y_star;
  std::vector<TargetEquilibrium> x_star_candidates;
  bool x_star_unique = false;
  double sup_dbar_estimate = -INFINITY;
  StateCombination argmax_state;
  double f1_min_on_xbar = INFINITY;
  StateCombination f1_witness;
  double recommended_d = 0.0;
  bool recommendation_made = false;
  std::string refusal_reason;
  SamplingConfig sampling;
  std::size_t grid_points = 0;
  std::size_t random_points = 0;
  std::size_t ascent_evaluations = 0;
  std::size_t xbar_vertices = 0;
  std::size_t xbar_samples = 0;

  /// d > max(0, sup estimate): the sampled stabilization condition.
  bool condition_holds(double d) const;
};

inline constexpr double kGainMargin = 0.1;
inline constexpr double kGainFloor = 1e-3;

/// Runs the full check and recommends a subsidy level. A report without a
/// recommendation carries the reason (empty or non-singleton X*, F1 < 0 on X-bar).
StabilityReport recommend_d(const Scenario& s, const Output& y_star, const SamplingConfig& cfg);

nlohmann::json to_json(const StabilityReport& report);

}  // namespace repsub
