#include "repsub/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "repsub/io.hpp"

namespace repsub::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Context {
  Scenario scenario;
  std::string hash;
  std::string banner;  // first line of every CSV
};

Context load_context(const RunManifest& m) {
  Context ctx{load_scenario(m.scenario_path), {}, {}};
  ctx.hash = scenario_hash(ctx.scenario);
  if (!m.expected_hash.empty() && m.expected_hash != ctx.hash)
    throw ScenarioError(m.scenario_path.string() + ": scenario hash " + ctx.hash + " does not match manifest (" +
                        m.expected_hash + ")");
  check_policy(ctx.scenario, m.policy);
  ctx.banner = std::string("# replicator-ctl ") + kVersion + " seed=" + std::to_string(m.seed) +
               " scenario=" + ctx.hash;
  return ctx;
}

json meta(const RunManifest& m, const Context& ctx) {
  return json{{"version", kVersion}, {"seed", m.seed}, {"scenario_hash", ctx.hash}, {"command", m.command}};
}

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ScenarioError(path.string() + ": cannot write output file");
  return os;
}

void prepare_out(const RunManifest& m, const Context& ctx) {
  std::error_code ec;
  fs::create_directories(m.out_dir, ec);
  if (ec) throw ScenarioError(m.out_dir.string() + ": cannot create output directory");
  auto os = open_output(m.out_dir / "manifest.json");
  os << manifest_to_json(m, ctx.hash).dump(2) << '\n';
}

void write_json(const fs::path& path, const json& doc) {
  auto os = open_output(path);
  os << doc.dump(2) << '\n';
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string numbered(const char* stem, std::size_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu%s", stem, i, ext);
  return buf;
}

std::vector<StateCombination> initial_states(const RunManifest& m, const Scenario& s) {
  std::vector<StateCombination> out;
  for (const auto& v : m.x0) out.push_back(parse_initial_state(s, v));
  if (m.grid > 0) {
    auto g = interior_grid(s.populations(), s.actions(), m.grid);
    out.insert(out.end(), g.begin(), g.end());
  }
  return out;
}

// Observer and target for V when the policy names a target with a singleton X*.
std::optional<TargetEquilibrium> unique_target(const Scenario& s, const ControlPolicy& p) {
  if (p.y_star.size() != s.actions()) return std::nullopt;
  auto eqs = find_target_equilibria(s, p.y_star);
  if (eqs.size() != 1) return std::nullopt;
  return eqs.front();
}

double distance_inf(const StateCombination& a, const StateCombination& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.values().size(); ++i) worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  return worst;
}

}  // namespace

json manifest_to_json(const RunManifest& m, const std::string& hash) {
  const auto& ic = m.integration;
  const auto& sc = m.sampling;
  return json{
      {"command", m.command},
      {"scenario", m.scenario_path.string()},
      {"scenario_hash", hash},
      {"policy", policy_to_json(m.policy)},
      {"integration",
       {{"dt", ic.dt},
        {"t_max", ic.t_max},
        {"renorm_tol", ic.renorm_tol},
        {"convergence_tol", ic.convergence_tol},
        {"convergence_window", ic.convergence_window},
        {"record_every", ic.record_every},
        {"stop_on_convergence", ic.stop_on_convergence},
        {"max_halvings", ic.max_halvings}}},
      {"sampling",
       {{"grid_per_dim", sc.grid_per_dim},
        {"random_samples", sc.random_samples},
        {"ascent_iters", sc.ascent_iters},
        {"ascent_starts", sc.ascent_starts},
        {"xbar_samples", sc.xbar_samples},
        {"xbar_burn_in", sc.xbar_burn_in},
        {"tube_radius", sc.tube_radius},
        {"boundary_margin", sc.boundary_margin}}},
      {"x0", m.x0},
      {"grid", m.grid},
      {"d_values", m.d_values},
      {"agents",
       {{"N", m.agents},
        {"rounds", m.rounds},
        {"revision_prob", m.agent_sim.revision_prob},
        {"mode", m.agent_sim.mode == PayoffMode::Expected ? "expected" : "sampled_match"}}},
      {"seed", m.seed},
      {"version", kVersion},
  };
}

RunManifest manifest_from_json(const json& doc) {
  try {
    RunManifest m;
    m.command = doc.at("command").get<std::string>();
    m.scenario_path = doc.at("scenario").get<std::string>();
    m.expected_hash = doc.value("scenario_hash", "");
    if (doc.contains("policy")) m.policy = parse_policy(doc.at("policy"));
    if (doc.contains("integration")) {
      const json& j = doc.at("integration");
      auto& ic = m.integration;
      ic.dt = j.value("dt", ic.dt);
      ic.t_max = j.value("t_max", ic.t_max);
      ic.renorm_tol = j.value("renorm_tol", ic.renorm_tol);
      ic.convergence_tol = j.value("convergence_tol", ic.convergence_tol);
      ic.convergence_window = j.value("convergence_window", ic.convergence_window);
      ic.record_every = j.value("record_every", ic.record_every);
      ic.stop_on_convergence = j.value("stop_on_convergence", ic.stop_on_convergence);
      ic.max_halvings = j.value("max_halvings", ic.max_halvings);
    }
    if (doc.contains("sampling")) {
      const json& j = doc.at("sampling");
      auto& sc = m.sampling;
      sc.grid_per_dim = j.value("grid_per_dim", sc.grid_per_dim);
      sc.random_samples = j.value("random_samples", sc.random_samples);
      sc.ascent_iters = j.value("ascent_iters", sc.ascent_iters);
      sc.ascent_starts = j.value("ascent_starts", sc.ascent_starts);
      sc.xbar_samples = j.value("xbar_samples", sc.xbar_samples);
      sc.xbar_burn_in = j.value("xbar_burn_in", sc.xbar_burn_in);
      sc.tube_radius = j.value("tube_radius", sc.tube_radius);
      sc.boundary_margin = j.value("boundary_margin", sc.boundary_margin);
    }
    m.x0 = doc.value("x0", m.x0);
    m.grid = doc.value("grid", m.grid);
    m.d_values = doc.value("d_values", m.d_values);
    if (doc.contains("agents")) {
      const json& j = doc.at("agents");
      m.agents = j.value("N", m.agents);
      m.rounds = j.value("rounds", m.rounds);
      m.agent_sim.revision_prob = j.value("revision_prob", m.agent_sim.revision_prob);
      m.agent_sim.mode = j.value("mode", std::string("expected")) == "sampled_match" ? PayoffMode::SampledMatch
                                                                                    : PayoffMode::Expected;
    }
    m.seed = doc.value("seed", m.seed);
    m.sampling.seed = m.seed;
    return m;
  } catch (const json::exception& e) {
    throw ScenarioError(std::string("manifest: ") + e.what());
  }
}

StateCombination parse_initial_state(const Scenario& s, const std::vector<double>& values) {
  const std::size_t m = s.populations();
  const std::size_t n = s.actions();
  StateCombination x;
  if (n == 2 && values.size() == m) {
    x = StateCombination::from_first_action_shares(values);
  } else if (values.size() == m * n) {
    x = StateCombination(m, n);
    std::copy(values.begin(), values.end(), x.values().begin());
  } else {
    throw ScenarioError("x0: expected " + std::to_string(m * n) + " values" +
                        (n == 2 ? " (or " + std::to_string(m) + " action-1 shares)" : std::string()));
  }
  check_state(s, x);
  return x;
}

int cmd_simulate(const RunManifest& m, std::ostream& err) {
  const Context ctx = load_context(m);
  const auto starts = initial_states(m, ctx.scenario);
  if (starts.empty()) throw ScenarioError("simulate: give at least one --x0 (or --grid)");
  const auto target = m.policy.y_star.empty() ? std::nullopt : unique_target(ctx.scenario, m.policy);
  const Observer observer = target ? make_lyapunov_observer(*target, ctx.scenario, m.policy) : Observer{};
  prepare_out(m, ctx);

  json runs = json::array();
  int status = kOk;
  for (std::size_t r = 0; r < starts.size(); ++r) {
    const std::string file = starts.size() == 1 ? "trajectory.csv" : numbered("trajectory", r, ".csv");
    json entry{{"file", file}, {"x0", starts[r].rows()}};
    try {
      const Trajectory traj = simulate(ctx.scenario, m.policy, starts[r], m.integration, observer);
      auto os = open_output(m.out_dir / file);
      os << ctx.banner << '\n';
      write_trajectory_csv(os, traj);
      entry["converged"] = traj.converged;
      entry["final_time"] = traj.times.back();
      entry["limit_state"] = traj.final_state().rows();
      entry["final_output"] = traj.outputs.back();
      if (!traj.observables.empty()) entry["final_V"] = traj.observables.back().V;
    } catch (const StepFailure& e) {
      err << "simulate: run " << r << ": " << e.what() << '\n';
      entry["error"] = e.what();
      status = kNumericFailure;
    }
    runs.push_back(std::move(entry));
  }
  json summary{{"meta", meta(m, ctx)}, {"policy", policy_to_json(m.policy)}, {"runs", runs}};
  if (target) summary["x_star"] = target->x_star.rows();
  write_json(m.out_dir / "summary.json", summary);
  return status;
}

int cmd_portrait(const RunManifest& m, std::ostream& err) {
  const Context ctx = load_context(m);
  const auto starts = initial_states(m, ctx.scenario);
  if (starts.empty() && m.grid == 0 && m.x0.empty())
    throw ScenarioError("portrait: give --grid N or at least one --x0");
  const auto target = m.policy.y_star.empty() ? std::nullopt : unique_target(ctx.scenario, m.policy);
  const Observer observer = target ? make_lyapunov_observer(*target, ctx.scenario, m.policy) : Observer{};
  prepare_out(m, ctx);

  const auto runs = phase_portrait(ctx.scenario, m.policy, starts, m.integration, observer, m.workers);
  const std::size_t cells = ctx.scenario.populations() * ctx.scenario.actions();
  auto index = open_output(m.out_dir / "index.csv");
  index << ctx.banner << '\n' << "run,file,status,converged,t_final";
  for (const char* tag : {"x0", "xf"})
    for (std::size_t k = 0; k < ctx.scenario.populations(); ++k)
      for (std::size_t i = 0; i < ctx.scenario.actions(); ++i) index << ',' << tag << '_' << i + 1 << '^' << k + 1;
  index << '\n';

  int status = kOk;
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const std::string file = numbered("traj", r, ".csv");
    index << r << ',' << file << ',';
    if (runs[r].trajectory) {
      const Trajectory& traj = *runs[r].trajectory;
      auto os = open_output(m.out_dir / file);
      os << ctx.banner << '\n';
      write_trajectory_csv(os, traj);
      index << "ok," << (traj.converged ? 1 : 0) << ',' << format_number(traj.times.back());
      for (double v : starts[r].values()) index << ',' << format_number(v);
      for (double v : traj.final_state().values()) index << ',' << format_number(v);
    } else {
      err << "portrait: run " << r << ": " << runs[r].error << '\n';
      index << "failed,0,";
      for (double v : starts[r].values()) index << ',' << format_number(v);
      for (std::size_t c = 0; c < cells; ++c) index << ',';
      status = kNumericFailure;
    }
    index << '\n';
  }
  return status;
}

int cmd_verify(const RunManifest& m, std::ostream& err) {
  const Context ctx = load_context(m);
  if (m.policy.y_star.empty()) throw ScenarioError("verify: a target output y_star is required");
  prepare_out(m, ctx);
  SamplingConfig sampling = m.sampling;
  sampling.seed = m.seed;
  const StabilityReport report = recommend_d(ctx.scenario, m.policy.y_star, sampling);
  json doc = to_json(report);
  doc["meta"] = meta(m, ctx);
  if (m.policy.active()) {
    doc["policy_d"] = m.policy.d;
    doc["policy_d_satisfies_condition"] = report.condition_holds(m.policy.d);
  }
  write_json(m.out_dir / "report.json", doc);
  if (!report.recommendation_made) {
    err << "verify: " << report.refusal_reason << '\n';
    return kInapplicable;
  }
  return kOk;
}

int cmd_sweep(const RunManifest& m, std::ostream& err) {
  const Context ctx = load_context(m);
  if (m.policy.y_star.empty()) throw ScenarioError("sweep: a target output y_star is required");
  const auto target = unique_target(ctx.scenario, m.policy);
  if (!target) {
    err << "sweep: X* is empty or not a singleton for this target\n";
    return kInapplicable;
  }
  const auto starts = initial_states(m, ctx.scenario);
  prepare_out(m, ctx);

  IntegrationConfig cfg = m.integration;
  cfg.record_every = std::numeric_limits<std::size_t>::max() / 2;
  auto os = open_output(m.out_dir / "sweep.csv");
  os << ctx.banner << '\n' << "d,fraction_converged,max_final_distance,failures\n";
  for (double d : m.d_values) {
    ControlPolicy p{m.policy.y_star, d};
    check_policy(ctx.scenario, p);
    const auto runs = phase_portrait(ctx.scenario, p, starts, cfg, {}, m.workers);
    std::size_t hits = 0, failures = 0;
    double worst = 0.0;
    for (const auto& r : runs) {
      if (!r.trajectory) {
        ++failures;
        continue;
      }
      const double dist = distance_inf(r.trajectory->final_state(), target->x_star);
      worst = std::max(worst, dist);
      if (dist < 1e-3) ++hits;
    }
    const double fraction = runs.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(runs.size());
    os << format_number(d) << ',' << format_number(fraction) << ',' << format_number(worst) << ',' << failures << '\n';
  }
  return kOk;
}

int cmd_agents(const RunManifest& m, std::ostream& err) {
  const Context ctx = load_context(m);
  if (m.x0.size() != 1) throw ScenarioError("agents: give exactly one --x0");
  const StateCombination x0 = parse_initial_state(ctx.scenario, m.x0.front());
  AgentPopulation pop = init_agents(ctx.scenario, x0, m.agents, m.seed);
  prepare_out(m, ctx);
  const StateCombination start = pop.shares();
  const auto series = run(pop, ctx.scenario, m.policy, m.rounds, m.agent_sim);

  const std::size_t n = ctx.scenario.actions();
  auto os = open_output(m.out_dir / "agents.csv");
  os << ctx.banner << '\n' << "round";
  for (std::size_t i = 0; i < n; ++i) os << ",y_" << i + 1;
  for (std::size_t i = 0; i < n; ++i) os << ",p_" << i + 1;
  os << ",total_subsidy\n";
  for (const auto& st : series) {
    os << st.round;
    for (double v : st.empirical_y) os << ',' << format_number(v);
    for (auto v : st.p) os << ',' << v;
    os << ',' << format_number(st.total_subsidy) << '\n';
  }

  json summary{{"meta", meta(m, ctx)},
               {"N", pop.size()},
               {"rounds", m.rounds},
               {"final_model_time", pop.model_time()},
               {"final_y", series.back().empirical_y}};
  // Mean-field reference from the rounded initial shares.
  const double horizon = pop.model_time();
  if (horizon > 2.0 * m.integration.dt) {
    IntegrationConfig cfg = m.integration;
    cfg.t_max = horizon + cfg.dt;
    cfg.stop_on_convergence = false;
    try {
      const Trajectory ode = simulate(ctx.scenario, m.policy, start, cfg);
      double worst = 0.0;
      for (const auto& st : series) {
        const Output y = output_at(ode, st.model_time);
        for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(st.empirical_y[i] - y[i]));
      }
      summary["ode_sup_deviation"] = worst;
      summary["ode_final_y"] = ode.outputs.back();
    } catch (const std::exception& e) {
      err << "agents: mean-field reference failed: " << e.what() << '\n';
      summary["ode_error"] = e.what();
    }
  }
  write_json(m.out_dir / "agents_summary.json", summary);
  return kOk;
}

int run_command(const RunManifest& m, std::ostream& err) {
  try {
    if (m.command == "simulate") return cmd_simulate(m, err);
    if (m.command == "portrait") return cmd_portrait(m, err);
    if (m.command == "verify") return cmd_verify(m, err);
    if (m.command == "sweep") return cmd_sweep(m, err);
    if (m.command == "agents") return cmd_agents(m, err);
    err << "unknown command '" << m.command << "'\n";
    return kInputError;
  } catch (const ScenarioError& e) {
    err << m.command << ": " << e.what() << '\n';
    return kInputError;
  } catch (const AssumptionViolation& e) {
    err << m.command << ": " << e.what() << '\n';
    return kAgentAssumption;
  } catch (const InapplicableError& e) {
    err << m.command << ": " << e.what() << '\n';
    return kInapplicable;
  } catch (const StepFailure& e) {
    err << m.command << ": integration failed: " << e.what() << '\n';
    return kNumericFailure;
  } catch (const DomainError& e) {
    err << m.command << ": " << e.what() << '\n';
    return kNumericFailure;
  } catch (const std::invalid_argument& e) {
    err << m.command << ": " << e.what() << '\n';
    return kInputError;
  }
}

int main_with_args(int argc, char** argv, std::ostream& err) {
  CLI::App app{"Replicator dynamics under output-feedback subsidies", "replicator-ctl"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunManifest m;
  std::string scenario, policy_file, manifest_file, out_dir = "out";
  std::optional<double> d_override;
  std::vector<double> y_star_override;
  std::vector<std::string> x0_lists;
  std::string d_values;
  std::size_t grid_per_dim = m.sampling.grid_per_dim;
  bool sampled_match = false;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate", "integrate trajectories from --x0 starts"},
      {"portrait", "phase portrait over --grid N or explicit --x0 starts"},
      {"verify", "check the stabilization condition and recommend d"},
      {"sweep", "convergence fraction to x* for each d in --d-values"},
      {"agents", "finite-population imitation simulation"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--scenario", scenario, "scenario JSON file");
    sub->add_option("--policy", policy_file, "policy JSON file {d, y_star}");
    sub->add_option("--d", d_override, "override the average subsidy d");
    sub->add_option("--y-star", y_star_override, "override the target output")->delimiter(',');
    sub->add_option("--x0", x0_lists, "initial state: m action-1 shares (two actions) or m*n shares");
    sub->add_option("--grid", m.grid, "interior grid points per free coordinate");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", m.seed, "random seed");
    sub->add_option("--dt", m.integration.dt, "integration step");
    sub->add_option("--t-max", m.integration.t_max, "integration horizon");
    sub->add_option("--record-every", m.integration.record_every, "record every k-th step");
    sub->add_option("--workers", m.workers, "worker threads for batch runs (0 = all cores)");
    sub->add_option("--manifest", manifest_file, "re-run an echoed manifest.json");
    if (name == "verify") {
      sub->add_option("--grid-per-dim", grid_per_dim, "lattice resolution for the supremum search");
      sub->add_option("--random-samples", m.sampling.random_samples, "uniform samples for the supremum search");
      sub->add_option("--ascent-iters", m.sampling.ascent_iters, "coordinate-ascent iterations per start");
      sub->add_option("--xbar-samples", m.sampling.xbar_samples, "hit-and-run samples on X-bar");
    }
    if (name == "sweep") sub->add_option("--d-values", d_values, "comma-separated subsidy levels");
    if (name == "agents") {
      sub->add_option("--agents", m.agents, "number of agents N");
      sub->add_option("--rounds", m.rounds, "number of rounds");
      sub->add_option("--revision-prob", m.agent_sim.revision_prob, "per-round revision probability");
      sub->add_flag("--sampled-match", sampled_match, "use single sampled matches instead of expected payoffs");
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out;
    const int code = app.exit(e, out, err);
    std::cout << out.str();
    return code == 0 ? kOk : kInputError;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (!manifest_file.empty()) {
      RunManifest loaded = manifest_from_json(read_json_file(manifest_file));
      if (loaded.command != command)
        throw ScenarioError("manifest was written by '" + loaded.command + "', not '" + command + "'");
      loaded.workers = m.workers;
      m = std::move(loaded);
    } else {
      m.command = command;
      if (scenario.empty()) throw ScenarioError("--scenario is required");
      m.scenario_path = scenario;
      if (!policy_file.empty()) m.policy = load_policy(policy_file);
      if (d_override) m.policy.d = *d_override;
      if (!y_star_override.empty()) m.policy.y_star = y_star_override;
      for (const auto& text : x0_lists) {
        std::vector<double> v;
        std::stringstream ss(text);
        std::string item;
        while (std::getline(ss, item, ',')) v.push_back(std::stod(item));
        m.x0.push_back(std::move(v));
      }
      if (!d_values.empty()) {
        std::stringstream ss(d_values);
        std::string item;
        while (std::getline(ss, item, ',')) m.d_values.push_back(std::stod(item));
      }
      m.sampling.grid_per_dim = grid_per_dim;
      m.sampling.seed = m.seed;
      m.agent_sim.mode = sampled_match ? PayoffMode::SampledMatch : PayoffMode::Expected;
    }
    m.out_dir = out_dir;
  } catch (const ScenarioError& e) {
    err << command << ": " << e.what() << '\n';
    return kInputError;
  } catch (const std::logic_error& e) {  // stod failures
    err << command << ": malformed number list: " << e.what() << '\n';
    return kInputError;
  }
  return run_command(m, err);
}

}  // namespace repsub::cli
