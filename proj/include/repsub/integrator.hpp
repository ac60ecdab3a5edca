#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "repsub/dynamics.hpp"
#include "repsub/game.hpp"

namespace repsub {

struct IntegrationConfig {
  double dt = 0.01;
  double t_max = 200.0;
  double renorm_tol = 1e-12;
  double convergence_tol = 1e-9;
  std::size_t convergence_window = 100;
  /// Keep every k-th step (the final state is always kept).
  std::size_t record_every = 1;
  /// Stop as soon as convergence is detected.
  bool stop_on_convergence = true;
  int max_halvings = 20;

  void validate() const;
};

/// Per-time scalars attached by a Lyapunov observer.
struct Observables {
  double V = 0.0;
  double Vdot = 0.0;
  double F1 = 0.0;
  double F2 = 0.0;
};

using VectorField = std::function<Derivative(const StateCombination&)>;
using Observer = std::function<Observables(const StateCombination&)>;

/// A single RK4 step could not be completed inside the domain.
class StepFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Trajectory {
  std::vector<double> times;
  std::vector<StateCombination> states;
  std::vector<Output> outputs;
  std::vector<Observables> observables;  // empty unless an observer was attached
  bool converged = false;
  std::size_t halvings = 0;  // number of step subdivisions forced by the domain

  std::size_t size() const { return times.size(); }
  const StateCombination& final_state() const { return states.back(); }
};

struct ConvergenceVerdict {
  bool converged = false;
  std::size_t index = 0;  // first sample of the quiet window
  double time = 0.0;
  StateCombination limit;
};

/// Lowest coordinate accepted for an initial state.
inline constexpr double kInteriorFloor = 1e-6;

/// One classical Runge-Kutta step followed by clamping of round-off
/// negatives and per-row renormalization. Throws StepFailure when a stage
/// leaves the field's domain or a coordinate drops below -1e-12.
StateCombination step_rk4(const VectorField& field, const StateCombination& x, double dt,
                          double renorm_tol = 1e-12);

Trajectory simulate(const Scenario& s, const ControlPolicy& policy, const StateCombination& x0,
                    const IntegrationConfig& cfg, const Observer& observer = {});

/// Scans the trajectory for convergence_window consecutive recorded steps
/// whose max-norm state change stays below convergence_tol.
ConvergenceVerdict detect_convergence(const Trajectory& traj, const IntegrationConfig& cfg);

struct PortraitRun {
  std::optional<Trajectory> trajectory;
  std::string error;
};

/// One run per initial state, returned in input order. Failures are
/// reported per entry. workers == 0 picks the hardware concurrency.
std::vector<PortraitRun> phase_portrait(const Scenario& s, const ControlPolicy& policy,
                                        std::span<const StateCombination> grid,
                                        const IntegrationConfig& cfg, const Observer& observer = {},
                                        unsigned workers = 0);

/// Interior lattice with `per_dim` points per free coordinate: for n = 2 the
/// action-1 shares i/(per_dim+1), i = 1..per_dim, crossed over populations.
std::vector<StateCombination> interior_grid(std::size_t m, std::size_t n, std::size_t per_dim);

/// Output at time t by linear interpolation between recorded samples;
/// clamps to the first/last sample outside the recorded range.
Output output_at(const Trajectory& traj, double t);

/// `t, x_1^1..x_n^m, y_1..y_n[, V, Vdot, F1, F2]`, one row per recorded step.
void write_trajectory_csv(std::ostream& os, const Trajectory& traj);

}  // namespace repsub
