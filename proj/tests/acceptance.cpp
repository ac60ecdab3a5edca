// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "repsub/agent_sim.hpp"
#include "repsub/dynamics.hpp"
#include "repsub/integrator.hpp"
#include "repsub/stability.hpp"
#include "support.hpp"

using namespace repsub;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

StateCombination shares(double a, double b, double c) {
  const double v[] = {a, b, c};
  return StateCombination::from_first_action_shares(v);
}

double distance(const StateCombination& a, const StateCombination& b) {
  return testing::max_abs(a.values(), b.values());
}

std::vector<StateCombination> five_starts() {
  return {shares(0.01, 0.01, 0.01), shares(0.01, 0.99, 0.01), shares(0.99, 0.01, 0.01), shares(0.99, 0.99, 0.01),
          shares(0.5, 0.5, 0.01)};
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Runs of criteria 2 and 3, kept for the Lyapunov check.
struct ControlledRuns {
  std::vector<PortraitRun> runs;
  double dt = 0.01;
};
ControlledRuns boundary_runs, interior_runs;

ControlledRuns controlled(const Output& y_star, double d, const StateCombination& x_star) {
  const Scenario s = testing::threepop();
  auto starts = five_starts();
  for (auto& x : interior_grid(3, 2, 9)) starts.push_back(std::move(x));
  const ControlPolicy p{y_star, d};
  const auto eq = TargetEquilibrium::make(x_star, y_star);
  IntegrationConfig cfg;
  cfg.record_every = 1;
  return {phase_portrait(s, p, starts, cfg, make_lyapunov_observer(eq, s, p)), cfg.dt};
}

Outcome convergence(const ControlledRuns& c, const StateCombination& x_star, const Output* y_star) {
  Outcome o;
  double worst = 0.0, worst_y = 0.0;
  std::size_t failed = 0;
  for (const auto& r : c.runs) {
    if (!r.trajectory) {
      ++failed;
      continue;
    }
    worst = std::max(worst, distance(r.trajectory->final_state(), x_star));
    if (y_star) worst_y = std::max(worst_y, testing::max_abs(r.trajectory->outputs.back(), *y_star));
  }
  o.ok = failed == 0 && worst < 1e-3 && worst_y < 1e-3;
  o.detail = fmt("%.0f runs, max |x(T)-x*| = %.2e, max |y(T)-y*| = %.2e", double(c.runs.size()), worst, worst_y);
  if (failed) o.detail += ", " + std::to_string(failed) + " failed";
  return o;
}

Outcome criterion1() {
  const Scenario s = testing::threepop();
  const auto runs = phase_portrait(s, ControlPolicy{}, five_starts(), {});
  bool low = false, high = false, all = true;
  double worst = 0.0;
  for (const auto& r : runs) {
    if (!r.trajectory) {
      all = false;
      continue;
    }
    const double a = distance(r.trajectory->final_state(), shares(0, 0, 1));
    const double b = distance(r.trajectory->final_state(), shares(0, 1, 1));
    worst = std::max(worst, std::min(a, b));
    low = low || a < 1e-3;
    high = high || b < 1e-3;
  }
  return {all && worst < 1e-3 && low && high,
          fmt("max distance to nearest attractor %.2e, (0,0,1) reached: ", worst) + (low ? "yes" : "no") +
              ", (0,1,1) reached: " + (high ? "yes" : "no")};
}

Outcome criterion2() {
  boundary_runs = controlled({1.0, 0.0}, 1.2, shares(1, 1, 1));
  return convergence(boundary_runs, shares(1, 1, 1), nullptr);
}

Outcome criterion3() {
  const Output y_star{0.8, 0.2};
  interior_runs = controlled(y_star, 1.5, shares(0, 1, 1));
  return convergence(interior_runs, shares(0, 1, 1), &y_star);
}

Outcome criterion4() {
  const Scenario s = testing::threepop();
  SamplingConfig cfg;
  cfg.grid_per_dim = 21;
  cfg.random_samples = 100000;
  const auto a = TargetEquilibrium::make(shares(1, 1, 1), {1.0, 0.0});
  const auto b = TargetEquilibrium::make(shares(0, 1, 1), {0.8, 0.2});
  const SupEstimate sa = estimate_sup_dbar(a, s, cfg);
  const SupEstimate sb = estimate_sup_dbar(b, s, cfg);
  const F1Check fa = check_f1_on_xbar(a, s, cfg.xbar_samples, cfg.seed);
  const F1Check fb = check_f1_on_xbar(b, s, cfg.xbar_samples, cfg.seed);
  return {sa.value < 1.2 && sb.value < 1.5 && fa.f1_min >= -1e-9 && fb.f1_min >= -1e-9,
          fmt("sup dbar %.6f (< 1.2) and %.6f (< 1.5); ", sa.value, sb.value) +
              fmt("min F1 on X-bar %.3e and %.3e", fa.f1_min, fb.f1_min)};
}

Outcome criterion5() {
  const Scenario s = testing::threepop();
  const auto a = find_target_equilibria(s, {1.0, 0.0});
  const auto b = find_target_equilibria(s, {0.8, 0.2});
  const bool ok = a.size() == 1 && a[0].x_star == shares(1, 1, 1) && b.size() == 1 && b[0].x_star == shares(0, 1, 1);
  return {ok, fmt("|X*| = %.0f for y*=(1,0), %.0f for y*=(0.8,0.2)", double(a.size()), double(b.size()))};
}

// Each property returns the number of violations over its cases.
struct Property {
  const char* name;
  std::size_t cases;
  std::function<std::size_t(std::mt19937_64&, std::size_t)> check;
};

std::size_t prop_local_shift(std::mt19937_64& rng, std::size_t cases) {
  std::uniform_real_distribution<double> shift(-10.0, 10.0), gain(0.1, 5.0);
  std::size_t bad = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const Scenario s = testing::random_scenario(rng, 2, 4, 2, 4);
    const Scenario t = local_shift(s, c % s.populations(), (c / 5) % s.actions(), shift(rng));
    const StateCombination x = testing::random_state(rng, s.populations(), s.actions());
    const ControlPolicy p{testing::random_target(rng, s.actions()), gain(rng)};
    const double e1 = testing::max_abs(field_uncontrolled(s, x).values(), field_uncontrolled(t, x).values());
    const double e2 = testing::max_abs(field_controlled(s, x, p).values(), field_controlled(t, x, p).values());
    bad += e1 > 1e-10 || e2 > 1e-10;
  }
  return bad;
}

// Two actions per population: the growth bound is stated for the general
// case but only holds when n = 2.
std::size_t prop_growth_bound(std::mt19937_64& rng, std::size_t cases) {
  std::uniform_real_distribution<double> gain(0.05, 5.0), unit(0.01, 0.99);
  std::size_t bad = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const Scenario s = testing::random_scenario(rng, 2, 5, 2, 2);
    const ControlPolicy p{testing::random_target(rng, 2), gain(rng)};
    const RegionBounds b = region_bounds(s, p);
    const auto car = carrier(p.y_star);
    const std::size_t i = car[c % car.size()];
    StateCombination x = testing::random_state(rng, s.populations(), 2);
    const double y = aggregate_output(x, s)[i];
    if (y >= b.M[i]) {
      const double scale = unit(rng) * b.M[i] / y;
      for (std::size_t k = 0; k < x.populations(); ++k) {
        x(k, i) *= scale;
        x(k, 1 - i) = 1.0 - x(k, i);
      }
    }
    const double rate = aggregate_rate(s, field_controlled(s, x, p))[i];
    bad += !(aggregate_output(x, s)[i] < b.M[i]) || !(rate > 0.0);
  }
  return bad;
}

std::size_t prop_confinement(std::mt19937_64& rng, std::size_t cases) {
  std::uniform_real_distribution<double> gain(0.2, 4.0);
  IntegrationConfig cfg;
  cfg.t_max = 20;
  std::size_t bad = 0;
  for (std::size_t c = 0; c < cases;) {
    const Scenario s = testing::random_scenario(rng, 2, 4, 2, 2);
    const ControlPolicy p{testing::random_target(rng, 2), gain(rng)};
    const RegionBounds b = region_bounds(s, p);
    StateCombination x0 = testing::random_state(rng, s.populations(), 2);
    for (double& v : x0.values()) v = 0.002 + 0.996 * v;
    const Output y0 = aggregate_output(x0, s);
    bool inside = true;
    for (std::size_t i : carrier(p.y_star)) inside = inside && y0[i] >= b.epsilon;
    if (!inside) continue;
    ++c;
    try {
      const Trajectory traj = simulate(s, p, x0, cfg);
      bool ok = true;
      for (const auto& y : traj.outputs)
        for (std::size_t i : carrier(p.y_star)) ok = ok && y[i] >= b.epsilon;
      bad += !ok;
    } catch (const std::exception&) {
      ++bad;
    }
  }
  return bad;
}

std::size_t prop_target_equilibria(std::mt19937_64& rng, std::size_t cases) {
  std::size_t bad = 0;
  for (std::size_t c = 0; c < cases;) {
    const Scenario s = testing::random_scenario(rng, 2, 4, 2, 3);
    StateCombination x(s.populations(), s.actions());
    std::uniform_int_distribution<std::size_t> pick(0, s.actions() - 1);
    for (std::size_t k = 0; k < s.populations(); ++k) x(k, pick(rng)) = 1.0;
    const Output y_star = c % 2 ? aggregate_output(x, s) : testing::random_target(rng, s.actions());
    const auto eqs = find_target_equilibria(s, y_star);
    if (eqs.empty()) continue;
    ++c;
    bool ok = true;
    for (const auto& eq : eqs)
      for (double d : {0.5, 1.0, 10.0}) ok = ok && field_residual(s, eq.x_star, ControlPolicy{y_star, d}) < 1e-9;
    bad += !ok;
  }
  return bad;
}

std::size_t prop_jensen(std::mt19937_64& rng, std::size_t cases) {
  std::size_t bad = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const std::size_t n = 2 + c % 4;
    const Output y_star = testing::random_target(rng, n);
    Output y = testing::random_simplex(rng, n);
    if (c % 2 == 0) {
      const double scale = std::pow(10.0, -double(c % 14));
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += (y[i] = y_star[i] + scale * y[i] + 1e-300);
      for (double& v : y) v /= sum;
    }
    const double f2 = lyapunov_f2(y, y_star);
    bool ok = f2 >= -1e-15;
    if (f2 < 1e-12)
      for (std::size_t i = 0; i < n; ++i)
        if (y_star[i] > 0) ok = ok && std::abs(y[i] - y_star[i]) < 1e-6;
    bad += !ok;
  }
  return bad;
}

std::size_t prop_vdot(std::mt19937_64& rng, std::size_t cases) {
  const Scenario s = testing::threepop();
  const TargetEquilibrium eqs[] = {TargetEquilibrium::make(shares(1, 1, 1), {1.0, 0.0}),
                                   TargetEquilibrium::make(shares(0, 1, 1), {0.8, 0.2})};
  std::uniform_real_distribution<double> gain(0.0, 3.0);
  const double h = 1e-6;
  std::size_t bad = 0;
  for (std::size_t c = 0; c < cases; ++c) {
    const auto& eq = eqs[c % 2];
    StateCombination x = testing::random_state(rng, 3, 2);
    for (double& v : x.values()) v = 0.02 + 0.96 * v;
    const ControlPolicy p{eq.y_star, gain(rng)};
    const Derivative dx = field_controlled(s, x, p);
    StateCombination plus = x, minus = x;
    for (std::size_t e = 0; e < x.values().size(); ++e) {
      plus.values()[e] += h * dx.values()[e];
      minus.values()[e] -= h * dx.values()[e];
    }
    const double fd = (lyapunov_V(plus, eq, s) - lyapunov_V(minus, eq, s)) / (2 * h);
    const double analytic = decompose_vdot(x, eq, s, p).Vdot;
    bad += std::abs(fd - analytic) > 1e-4 * std::abs(analytic) + 1e-9;
  }
  return bad;
}

Outcome criterion6() {
  const std::vector<Property> props = {
      {"local shift", 10000, prop_local_shift},
      {"growth bound (n=2)", 10000, prop_growth_bound},
      {"confinement", 1000, prop_confinement},
      {"X* equilibria", 1000, prop_target_equilibria},
      {"Jensen", 10000, prop_jensen},
      {"Vdot", 1000, prop_vdot},
  };
  Outcome o;
  std::mt19937_64 rng(20240601);
  for (const auto& p : props) {
    const std::size_t bad = p.check(rng, p.cases);
    o.ok = o.ok && bad == 0;
    if (!o.detail.empty()) o.detail += "; ";
    o.detail += std::string(p.name) + " " + std::to_string(p.cases - bad) + "/" + std::to_string(p.cases);
  }
  return o;
}

Outcome lyapunov(const ControlledRuns& c) {
  Outcome o;
  double worst_rise = -INFINITY, worst_terminal = 0.0;
  for (const auto& r : c.runs) {
    if (!r.trajectory || r.trajectory->observables.empty()) {
      o.ok = false;
      continue;
    }
    const auto& obs = r.trajectory->observables;
    for (std::size_t i = 1; i < obs.size(); ++i) worst_rise = std::max(worst_rise, obs[i].V - obs[i - 1].V);
    worst_terminal = std::max(worst_terminal, obs.back().V);
  }
  o.ok = o.ok && worst_rise < 1e-6 * c.dt && worst_terminal < 1e-6;
  o.detail = fmt("max per-step rise %.2e (limit %.0e), max terminal V %.2e", worst_rise, 1e-6 * c.dt, worst_terminal);
  return o;
}

Outcome criterion7() {
  const Outcome a = lyapunov(boundary_runs);
  const Outcome b = lyapunov(interior_runs);
  return {a.ok && b.ok, "d=1.2: " + a.detail + "; d=1.5: " + b.detail};
}

Outcome criterion8() {
  const Scenario s = testing::threepop();
  const ControlPolicy p{{1.0, 0.0}, 1.2};
  const StateCombination x0 = shares(0.5, 0.5, 0.5);
  const double horizon = 50.0;
  IntegrationConfig cfg;
  cfg.stop_on_convergence = false;
  cfg.t_max = horizon + 1;
  const Trajectory ode = simulate(s, p, x0, cfg);
  double total = 0.0, budget = 0.0;
  const int seeds = 10;
  for (int seed = 1; seed <= seeds; ++seed) {
    AgentPopulation pop = init_agents(s, x0, 10000, seed);
    double worst = 0.0;
    for (const auto& r : run_until(pop, s, p, horizon, {})) {
      if (r.model_time <= horizon) worst = std::max(worst, std::abs(r.empirical_y[0] - output_at(ode, r.model_time)[0]));
      budget = std::max(budget, std::abs(r.paid_subsidy - r.total_subsidy));
    }
    total += worst;
  }
  const double mean = total / seeds;
  return {mean < 0.05 && budget <= 1e-9, fmt("mean sup |y1 - ODE y1| = %.4f (< 0.05), max budget error %.1e", mean, budget)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* title;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "bistability at d=0", 5, criterion1},
      {2, "global stabilization, y*=(1,0), d=1.2", 60, criterion2},
      {3, "global stabilization, y*=(0.8,0.2), d=1.5", 60, criterion3},
      {4, "gain bound and F1 on X-bar", 120, criterion4},
      {5, "target equilibria", 60, criterion5},
      {6, "randomized property suite", 120, criterion6},
      {7, "Lyapunov monotonicity on runs 2 and 3", 60, criterion7},
      {8, "agent simulation tracks the mean field", 120, criterion8},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.ok && in_time;
    failures += !pass;
    std::printf("%s criterion %d: %s | %s | %.2f s (limit %.0f s)%s\n", pass ? "PASS" : "FAIL", c.id, c.title,
                o.detail.c_str(), secs, c.limit_s, in_time ? "" : " TIMEOUT");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", int(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
