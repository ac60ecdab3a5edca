#include "repsub/integrator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <thread>

namespace repsub {

namespace {

StateCombination axpy(const StateCombination& x, double h, const Derivative& k) {
  StateCombination out = x;
  auto o = out.values();
  auto kv = k.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += h * kv[i];
  return out;
}

Derivative eval_stage(const VectorField& field, const StateCombination& x) {
  try {
    return field(x);
  } catch (const DomainError& e) {
    throw StepFailure(std::string("stage left the domain: ") + e.what());
  }
}

double max_change(const StateCombination& a, const StateCombination& b) {
  double worst = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) worst = std::max(worst, std::abs(av[i] - bv[i]));
  return worst;
}

void append_number(std::string& line, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  line += buf;
}

// Recursively subdivides a step that fails, up to `depth_left` halvings.
StateCombination advance(const VectorField& field, const StateCombination& x, double h,
                         const IntegrationConfig& cfg, int depth_left, std::size_t& halvings) {
  try {
    return step_rk4(field, x, h, cfg.renorm_tol);
  } catch (const StepFailure&) {
    if (depth_left == 0) throw;
  }
  ++halvings;
  StateCombination mid = advance(field, x, 0.5 * h, cfg, depth_left - 1, halvings);
  return advance(field, mid, 0.5 * h, cfg, depth_left - 1, halvings);
}

}  // namespace

void IntegrationConfig::validate() const {
  if (!(dt > 0.0)) throw ScenarioError("integration.dt: must be > 0");
  if (!(t_max > dt)) throw ScenarioError("integration.t_max: must exceed dt");
  if (!(renorm_tol > 0.0) || !(convergence_tol > 0.0)) throw ScenarioError("integration: tolerances must be > 0");
  if (convergence_window == 0) throw ScenarioError("integration.convergence_window: must be >= 1");
  if (record_every == 0) throw ScenarioError("integration.record_every: must be >= 1");
  if (max_halvings < 0) throw ScenarioError("integration.max_halvings: must be >= 0");
}

StateCombination step_rk4(const VectorField& field, const StateCombination& x, double dt, double renorm_tol) {
  const Derivative k1 = eval_stage(field, x);
  const Derivative k2 = eval_stage(field, axpy(x, 0.5 * dt, k1));
  const Derivative k3 = eval_stage(field, axpy(x, 0.5 * dt, k2));
  const Derivative k4 = eval_stage(field, axpy(x, dt, k3));

  StateCombination out = x;
  auto o = out.values();
  auto a = k1.values(), b = k2.values(), c = k3.values(), d = k4.values();
  for (std::size_t i = 0; i < o.size(); ++i) {
    o[i] += dt / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]);
    if (!std::isfinite(o[i])) throw StepFailure("non-finite coordinate after step");
    if (o[i] < kSimplexLowerTol) throw StepFailure("coordinate dropped below the simplex");
    if (o[i] < 0.0) o[i] = 0.0;
  }
  for (std::size_t k = 0; k < out.populations(); ++k) {
    auto r = out.row(k);
    double sum = 0.0;
    for (double v : r) sum += v;
    if (std::abs(sum - 1.0) > renorm_tol)
      for (double& v : r) v /= sum;
  }
  return out;
}

Trajectory simulate(const Scenario& s, const ControlPolicy& policy, const StateCombination& x0,
                    const IntegrationConfig& cfg, const Observer& observer) {
  cfg.validate();
  check_state(s, x0);
  check_policy(s, policy);
  for (double v : x0.values())
    if (v < kInteriorFloor) throw ScenarioError("initial state must be interior (every share >= 1e-6)");

  const VectorField field = [&](const StateCombination& x) { return field_controlled(s, x, policy); };

  Trajectory traj;
  auto record = [&](double t, const StateCombination& x) {
    traj.times.push_back(t);
    traj.states.push_back(x);
    traj.outputs.push_back(aggregate_output(x, s));
    if (observer) traj.observables.push_back(observer(x));
  };

  const auto steps = static_cast<std::size_t>(std::llround(cfg.t_max / cfg.dt));
  StateCombination x = x0;
  record(0.0, x);
  std::size_t quiet = 0;
  for (std::size_t step = 1; step <= steps; ++step) {
    StateCombination next;
    try {
      next = advance(field, x, cfg.dt, cfg, cfg.max_halvings, traj.halvings);
    } catch (const StepFailure& e) {
      throw StepFailure("t = " + std::to_string((step - 1) * cfg.dt) + ": " + e.what());
    }
    quiet = max_change(next, x) < cfg.convergence_tol ? quiet + 1 : 0;
    x = std::move(next);
    const double t = static_cast<double>(step) * cfg.dt;
    const bool done = quiet >= cfg.convergence_window;
    if (done) traj.converged = true;
    const bool stop = step == steps || (done && cfg.stop_on_convergence);
    if (step % cfg.record_every == 0 || stop) record(t, x);
    if (stop) break;
  }
  return traj;
}

ConvergenceVerdict detect_convergence(const Trajectory& traj, const IntegrationConfig& cfg) {
  if (traj.size() == 0) throw std::invalid_argument("detect_convergence: empty trajectory");
  ConvergenceVerdict v;
  std::size_t quiet = 0;
  for (std::size_t t = 1; t < traj.size(); ++t) {
    quiet = max_change(traj.states[t], traj.states[t - 1]) < cfg.convergence_tol ? quiet + 1 : 0;
    if (quiet >= cfg.convergence_window) {
      v.converged = true;
      v.index = t - quiet;
      v.time = traj.times[v.index];
      break;
    }
  }
  v.limit = traj.final_state();
  return v;
}

std::vector<PortraitRun> phase_portrait(const Scenario& s, const ControlPolicy& policy,
                                        std::span<const StateCombination> grid,
                                        const IntegrationConfig& cfg, const Observer& observer,
                                        unsigned workers) {
  std::vector<PortraitRun> runs(grid.size());
  if (grid.empty()) return runs;
  if (workers == 0) workers = std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(grid.size()));

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        runs[i].trajectory = simulate(s, policy, grid[i], cfg, observer);
      } catch (const std::exception& e) {
        runs[i].error = e.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  }
  return runs;
}

std::vector<StateCombination> interior_grid(std::size_t m, std::size_t n, std::size_t per_dim) {
  if (per_dim == 0 || m == 0 || n < 2) return {};
  // Compositions of `total` into n positive parts give one population's points.
  const std::size_t total = per_dim + n - 1;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> parts(n);
  auto compose = [&](auto&& self, std::size_t i, std::size_t left) -> void {
    if (i + 1 == n) {
      parts[i] = left;
      std::vector<double> z(n);
      for (std::size_t j = 0; j < n; ++j) z[j] = static_cast<double>(parts[j]) / static_cast<double>(total);
      rows.push_back(std::move(z));
      return;
    }
    for (std::size_t c = 1; c + (n - 1 - i) <= left; ++c) {
      parts[i] = c;
      self(self, i + 1, left - c);
    }
  };
  compose(compose, 0, total);

  std::vector<StateCombination> out;
  std::vector<std::size_t> idx(m, 0);
  while (true) {
    StateCombination x(m, n);
    for (std::size_t k = 0; k < m; ++k) std::copy(rows[idx[k]].begin(), rows[idx[k]].end(), x.row(k).begin());
    out.push_back(std::move(x));
    std::size_t k = m;
    while (k > 0 && ++idx[k - 1] == rows.size()) idx[--k] = 0;
    if (k == 0) break;
  }
  return out;
}

Output output_at(const Trajectory& traj, double t) {
  if (traj.size() == 0) throw std::invalid_argument("output_at: empty trajectory");
  if (t <= traj.times.front()) return traj.outputs.front();
  if (t >= traj.times.back()) return traj.outputs.back();
  const auto hi = static_cast<std::size_t>(std::upper_bound(traj.times.begin(), traj.times.end(), t) - traj.times.begin());
  const std::size_t lo = hi - 1;
  const double w = (t - traj.times[lo]) / (traj.times[hi] - traj.times[lo]);
  Output y(traj.outputs[lo].size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = (1.0 - w) * traj.outputs[lo][i] + w * traj.outputs[hi][i];
  return y;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& traj) {
  if (traj.size() == 0) return;
  const std::size_t m = traj.states.front().populations();
  const std::size_t n = traj.states.front().actions();
  const bool obs = !traj.observables.empty();

  std::string line = "t";
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < n; ++i) line += ",x_" + std::to_string(i + 1) + "^" + std::to_string(k + 1);
  for (std::size_t i = 0; i < n; ++i) line += ",y_" + std::to_string(i + 1);
  if (obs) line += ",V,Vdot,F1,F2";
  os << line << '\n';

  for (std::size_t t = 0; t < traj.size(); ++t) {
    line.clear();
    append_number(line, traj.times[t]);
    for (double v : traj.states[t].values()) {
      line += ',';
      append_number(line, v);
    }
    for (double v : traj.outputs[t]) {
      line += ',';
      append_number(line, v);
    }
    if (obs) {
      const auto& o = traj.observables[t];
      for (double v : {o.V, o.Vdot, o.F1, o.F2}) {
        line += ',';
        append_number(line, v);
      }
    }
    os << line << '\n';
  }
}

}  // namespace repsub
