#include <sstream>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "repsub/agent_sim.hpp"
#include "repsub/cli.hpp"
#include "repsub/dynamics.hpp"
#include "repsub/game.hpp"
#include "repsub/integrator.hpp"
#include "repsub/io.hpp"
#include "repsub/stability.hpp"

namespace py = pybind11;
using namespace repsub;

namespace {

using Rows = std::vector<std::vector<double>>;

ControlPolicy policy(double d, const std::optional<Output>& y_star) {
  ControlPolicy p;
  p.d = d;
  if (y_star) p.y_star = *y_star;
  return p;
}

py::array_t<double> states_array(const std::vector<StateCombination>& xs, std::size_t m, std::size_t n) {
  py::array_t<double> out({xs.size(), m, n});
  auto a = out.mutable_unchecked<3>();
  for (std::size_t t = 0; t < xs.size(); ++t)
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i = 0; i < n; ++i) a(t, k, i) = xs[t](k, i);
  return out;
}

py::array_t<double> rows_array(const std::vector<std::vector<double>>& rows, std::size_t width) {
  py::array_t<double> out({rows.size(), width});
  auto a = out.mutable_unchecked<2>();
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t i = 0; i < width; ++i) a(t, i) = rows[t][i];
  return out;
}

py::dict trajectory_dict(const Trajectory& traj, const Scenario& s) {
  py::dict d;
  d["times"] = py::array_t<double>(traj.times.size(), traj.times.data());
  d["states"] = states_array(traj.states, s.populations(), s.actions());
  d["outputs"] = rows_array(traj.outputs, s.actions());
  d["converged"] = traj.converged;
  d["halvings"] = traj.halvings;
  if (!traj.observables.empty()) {
    std::vector<std::vector<double>> obs;
    for (const auto& o : traj.observables) obs.push_back({o.V, o.Vdot, o.F1, o.F2});
    d["observables"] = rows_array(obs, 4);
  }
  return d;
}

IntegrationConfig integration(double dt, double t_max, std::size_t record_every, bool stop_on_convergence) {
  IntegrationConfig cfg;
  cfg.dt = dt;
  cfg.t_max = t_max;
  cfg.record_every = record_every;
  cfg.stop_on_convergence = stop_on_convergence;
  return cfg;
}

SamplingConfig sampling(std::size_t grid_per_dim, std::size_t random_samples, std::size_t ascent_iters,
                        std::size_t xbar_samples, std::uint64_t seed) {
  SamplingConfig cfg;
  cfg.grid_per_dim = grid_per_dim;
  cfg.random_samples = random_samples;
  cfg.ascent_iters = ascent_iters;
  cfg.xbar_samples = xbar_samples;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Replicator dynamics under output-feedback subsidies";
  mod.attr("__version__") = kVersion;

  py::register_exception<InapplicableError>(mod, "InapplicableError", PyExc_RuntimeError);
  py::register_exception<AssumptionViolation>(mod, "AssumptionViolation", PyExc_RuntimeError);
  py::register_exception<DomainError>(mod, "DomainError", PyExc_ArithmeticError);
  py::register_exception<StepFailure>(mod, "StepFailure", PyExc_ArithmeticError);

  py::class_<Scenario>(mod, "Scenario")
      .def(py::init([](const std::vector<double>& shares, const std::vector<Rows>& payoffs) {
             if (shares.size() != payoffs.size()) throw ScenarioError("shares and payoffs differ in length");
             ScenarioDescription raw;
             for (std::size_t k = 0; k < shares.size(); ++k) raw.populations.push_back({shares[k], payoffs[k]});
             return validate_scenario(raw);
           }),
           py::arg("shares"), py::arg("payoffs"))
      .def_static("from_json", [](const std::string& text) { return parse_scenario(nlohmann::json::parse(text)); })
      .def_static("load", [](const std::string& path) { return load_scenario(path); })
      .def("to_json", [](const Scenario& s) { return scenario_to_json(s).dump(); })
      .def("hash", &scenario_hash)
      .def_property_readonly("populations", &Scenario::populations)
      .def_property_readonly("actions", &Scenario::actions)
      .def_property_readonly("shares", [](const Scenario& s) { return std::vector<double>(s.shares().begin(), s.shares().end()); })
      .def("payoff", [](const Scenario& s, std::size_t k) {
        const Matrix& a = s.payoff(k);
        Rows rows(a.rows(), std::vector<double>(a.cols()));
        for (std::size_t i = 0; i < a.rows(); ++i)
          for (std::size_t j = 0; j < a.cols(); ++j) rows[i][j] = a(i, j);
        return rows;
      });

  mod.def(
      "aggregate_output", [](const Scenario& s, const Rows& x) { return aggregate_output(StateCombination::from_rows(x), s); },
      py::arg("scenario"), py::arg("x"));
  mod.def(
      "field",
      [](const Scenario& s, const Rows& x, double d, const std::optional<Output>& y_star) {
        const StateCombination state = StateCombination::from_rows(x);
        check_state(s, state);
        const ControlPolicy p = policy(d, y_star);
        check_policy(s, p);
        return field_controlled(s, state, p).rows();
      },
      py::arg("scenario"), py::arg("x"), py::arg("d") = 0.0, py::arg("y_star") = py::none());
  mod.def(
      "region_bounds",
      [](const Scenario& s, double d, const Output& y_star) {
        const RegionBounds b = region_bounds(s, policy(d, y_star));
        py::dict out;
        out["a_max"] = b.a_max;
        out["a_min"] = b.a_min;
        out["M"] = b.M;
        out["epsilon"] = b.epsilon;
        return out;
      },
      py::arg("scenario"), py::arg("d"), py::arg("y_star"));

  mod.def(
      "simulate",
      [](const Scenario& s, const Rows& x0, double d, const std::optional<Output>& y_star, double dt, double t_max,
         std::size_t record_every, bool stop_on_convergence, const std::optional<Rows>& x_star) {
        const ControlPolicy p = policy(d, y_star);
        const IntegrationConfig cfg = integration(dt, t_max, record_every, stop_on_convergence);
        Observer observer;
        if (x_star) {
          if (!y_star) throw ScenarioError("x_star needs y_star");
          observer = make_lyapunov_observer(TargetEquilibrium::make(StateCombination::from_rows(*x_star), *y_star), s, p);
        }
        Trajectory traj;
        {
          py::gil_scoped_release release;
          traj = simulate(s, p, StateCombination::from_rows(x0), cfg, observer);
        }
        return trajectory_dict(traj, s);
      },
      py::arg("scenario"), py::arg("x0"), py::arg("d") = 0.0, py::arg("y_star") = py::none(), py::arg("dt") = 0.01,
      py::arg("t_max") = 200.0, py::arg("record_every") = 1, py::arg("stop_on_convergence") = true,
      py::arg("x_star") = py::none());

  mod.def(
      "phase_portrait",
      [](const Scenario& s, const std::vector<Rows>& starts, double d, const std::optional<Output>& y_star, double dt,
         double t_max, unsigned workers) {
        std::vector<StateCombination> grid;
        for (const auto& x : starts) grid.push_back(StateCombination::from_rows(x));
        IntegrationConfig cfg = integration(dt, t_max, 1, true);
        std::vector<PortraitRun> runs;
        {
          py::gil_scoped_release release;
          runs = phase_portrait(s, policy(d, y_star), grid, cfg, {}, workers);
        }
        py::list out;
        for (const auto& r : runs) {
          if (r.trajectory) out.append(trajectory_dict(*r.trajectory, s));
          else out.append(py::dict(py::arg("error") = r.error));
        }
        return out;
      },
      py::arg("scenario"), py::arg("starts"), py::arg("d") = 0.0, py::arg("y_star") = py::none(), py::arg("dt") = 0.01,
      py::arg("t_max") = 200.0, py::arg("workers") = 0);

  mod.def(
      "interior_grid",
      [](std::size_t m, std::size_t n, std::size_t per_dim) {
        std::vector<Rows> out;
        for (const auto& x : interior_grid(m, n, per_dim)) out.push_back(x.rows());
        return out;
      },
      py::arg("populations"), py::arg("actions"), py::arg("per_dim"));

  mod.def(
      "find_target_equilibria",
      [](const Scenario& s, const Output& y_star) {
        std::vector<Rows> out;
        for (const auto& eq : find_target_equilibria(s, y_star)) out.push_back(eq.x_star.rows());
        return out;
      },
      py::arg("scenario"), py::arg("y_star"));

  mod.def(
      "lyapunov_terms",
      [](const Scenario& s, const Rows& x, const Rows& x_star, const Output& y_star, double d) {
        const auto eq = TargetEquilibrium::make(StateCombination::from_rows(x_star), y_star);
        const StateCombination state = StateCombination::from_rows(x);
        const LyapunovTerms t = decompose_vdot(state, eq, s, policy(d, y_star));
        py::dict out;
        out["V"] = lyapunov_V(state, eq, s);
        out["Vdot"] = t.Vdot;
        out["F1"] = t.F1;
        out["F2"] = t.F2;
        return out;
      },
      py::arg("scenario"), py::arg("x"), py::arg("x_star"), py::arg("y_star"), py::arg("d"));

  mod.def(
      "_recommend_d_json",
      [](const Scenario& s, const Output& y_star, std::size_t grid_per_dim, std::size_t random_samples,
         std::size_t ascent_iters, std::size_t xbar_samples, std::uint64_t seed) {
        StabilityReport r;
        {
          py::gil_scoped_release release;
          r = recommend_d(s, y_star, sampling(grid_per_dim, random_samples, ascent_iters, xbar_samples, seed));
        }
        return to_json(r).dump();
      },
      py::arg("scenario"), py::arg("y_star"), py::arg("grid_per_dim") = 21, py::arg("random_samples") = 100000,
      py::arg("ascent_iters") = 200, py::arg("xbar_samples") = 10000, py::arg("seed") = 1);

  mod.def(
      "run_agents",
      [](const Scenario& s, const Rows& x0, std::size_t agents, std::size_t rounds, double d,
         const std::optional<Output>& y_star, std::uint64_t seed, double revision_prob, bool sampled_match) {
        AgentSimConfig cfg;
        cfg.revision_prob = revision_prob;
        cfg.mode = sampled_match ? PayoffMode::SampledMatch : PayoffMode::Expected;
        std::vector<RoundStats> series;
        {
          py::gil_scoped_release release;
          AgentPopulation pop = init_agents(s, StateCombination::from_rows(x0), agents, seed);
          series = run(pop, s, policy(d, y_star), rounds, cfg);
        }
        std::vector<std::vector<double>> ys, ps;
        std::vector<double> times, subsidy;
        for (const auto& r : series) {
          ys.push_back(r.empirical_y);
          ps.emplace_back(r.p.begin(), r.p.end());
          times.push_back(r.model_time);
          subsidy.push_back(r.paid_subsidy);
        }
        py::dict out;
        out["model_time"] = py::array_t<double>(times.size(), times.data());
        out["y"] = rows_array(ys, s.actions());
        out["p"] = rows_array(ps, s.actions());
        out["paid_subsidy"] = py::array_t<double>(subsidy.size(), subsidy.data());
        return out;
      },
      py::arg("scenario"), py::arg("x0"), py::arg("agents") = 10000, py::arg("rounds") = 1000, py::arg("d") = 0.0,
      py::arg("y_star") = py::none(), py::arg("seed") = 1, py::arg("revision_prob") = 0.05,
      py::arg("sampled_match") = false);

  mod.def(
      "run_cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "replicator-ctl");
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        std::ostringstream err;
        const int code = cli::main_with_args(static_cast<int>(argv.size()), argv.data(), err);
        return py::make_tuple(code, err.str());
      },
      py::arg("args"));
}
