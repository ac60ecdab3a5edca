#include "repsub/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Dense>

namespace repsub {

namespace {

constexpr double kF2Floor = 1e-12;
constexpr double kEquilibriumTol = 1e-9;
constexpr double kPayoffTieTol = 1e-9;
constexpr std::size_t kMaxVertexVariables = 24;

struct Candidate {
  double value;
  StateCombination x;
};

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

bool contains_point(const std::vector<StateCombination>& pts, const StateCombination& x) {
  return std::any_of(pts.begin(), pts.end(),
                     [&](const StateCombination& p) { return max_abs_diff(p.values(), x.values()) < 1e-9; });
}

void check_target(const Scenario& s, std::span<const double> y_star) {
  if (y_star.size() != s.actions()) throw ScenarioError("y_star: expected " + std::to_string(s.actions()) + " entries");
  if (!in_simplex(y_star)) throw ScenarioError("y_star: not a point of the simplex");
}

// Equality system over the supported coordinates: one row-sum constraint per
// population and one aggregate constraint per action.
struct SupportSystem {
  std::vector<std::pair<std::size_t, std::size_t>> vars;  // (k, i)
  Eigen::MatrixXd E;
  Eigen::VectorXd b;

  SupportSystem(const Scenario& s, std::span<const double> y_star,
                const std::vector<std::vector<std::size_t>>& supports) {
    const std::size_t m = s.populations();
    const std::size_t n = s.actions();
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i : supports[k]) vars.emplace_back(k, i);
    E = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m + n), static_cast<Eigen::Index>(vars.size()));
    b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(m + n));
    for (std::size_t c = 0; c < vars.size(); ++c) {
      const auto [k, i] = vars[c];
      E(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) = 1.0;
      E(static_cast<Eigen::Index>(m + i), static_cast<Eigen::Index>(c)) = s.share(k);
    }
    for (std::size_t k = 0; k < m; ++k) b(static_cast<Eigen::Index>(k)) = 1.0;
    for (std::size_t i = 0; i < n; ++i) b(static_cast<Eigen::Index>(m + i)) = y_star[i];
  }

  StateCombination to_state(const Scenario& s, const Eigen::VectorXd& z) const {
    StateCombination x(s.populations(), s.actions());
    for (std::size_t c = 0; c < vars.size(); ++c) x(vars[c].first, vars[c].second) = z(static_cast<Eigen::Index>(c));
    return x;
  }
};

Eigen::Index matrix_rank(const Eigen::MatrixXd& a) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
  lu.setThreshold(1e-10);
  return lu.rank();
}

}  // namespace

TargetEquilibrium TargetEquilibrium::make(StateCombination x_star, Output y_star) {
  TargetEquilibrium eq{std::move(x_star), std::move(y_star), {}};
  for (std::size_t k = 0; k < eq.x_star.populations(); ++k) eq.carriers.push_back(carrier(eq.x_star.row(k)));
  return eq;
}

double lyapunov_V(const StateCombination& x, const TargetEquilibrium& eq, const Scenario& s) {
  double V = 0.0;
  for (std::size_t k = 0; k < x.populations(); ++k) {
    for (std::size_t i : eq.carriers[k]) {
      const double target = eq.x_star(k, i);
      if (!(x(k, i) > 0.0)) return std::numeric_limits<double>::infinity();
      V -= s.share(k) * target * std::log(x(k, i) / target);
    }
  }
  return V;
}

double lyapunov_f1(const StateCombination& x, const TargetEquilibrium& eq, const Scenario& s) {
  const Output y = aggregate_output(x, s);
  double F1 = 0.0;
  for (std::size_t k = 0; k < x.populations(); ++k)
    F1 += s.share(k) * (average_payoff(s, k, eq.x_star.row(k), y) - average_payoff(s, k, x.row(k), y));
  return F1;
}

double lyapunov_f2(std::span<const double> y, std::span<const double> y_star) {
  double F2 = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y_star[i] <= 0.0) continue;
    if (!(y[i] > 0.0)) return std::numeric_limits<double>::infinity();
    F2 += (y_star[i] - y[i]) * y_star[i] / y[i];
  }
  return F2;
}

LyapunovTerms decompose_vdot(const StateCombination& x, const TargetEquilibrium& eq, const Scenario& s,
                             const ControlPolicy& policy) {
  LyapunovTerms t;
  t.F1 = lyapunov_f1(x, eq, s);
  t.F2 = lyapunov_f2(aggregate_output(x, s), eq.y_star);
  t.Vdot = -t.F1 - policy.d * t.F2;
  return t;
}

std::optional<double> d_bar(const StateCombination& x, const TargetEquilibrium& eq, const Scenario& s) {
  const double F2 = lyapunov_f2(aggregate_output(x, s), eq.y_star);
  if (!(F2 >= kF2Floor) || !std::isfinite(F2)) return std::nullopt;
  return -lyapunov_f1(x, eq, s) / F2;
}

Observer make_lyapunov_observer(const TargetEquilibrium& eq, const Scenario& s, const ControlPolicy& policy) {
  return [eq, s, policy](const StateCombination& x) {
    const LyapunovTerms t = decompose_vdot(x, eq, s, policy);
    return Observables{lyapunov_V(x, eq, s), t.Vdot, t.F1, t.F2};
  };
}

SupEstimate estimate_sup_dbar(const TargetEquilibrium& eq, const Scenario& s, const SamplingConfig& cfg) {
  const std::size_t m = s.populations();
  const std::size_t n = s.actions();
  const auto& y_star = eq.y_star;
  SupEstimate est;
  est.seed = cfg.seed;

  auto evaluate = [&](const StateCombination& x) -> std::optional<double> {
    const Output y = aggregate_output(x, s);
    for (std::size_t i = 0; i < n; ++i)
      if (y_star[i] > 0.0 && y[i] < cfg.boundary_margin) return std::nullopt;
    if (max_abs_diff(y, y_star) < cfg.tube_radius) return std::nullopt;
    return d_bar(x, eq, s);
  };

  std::vector<Candidate> top;
  auto offer = [&](const StateCombination& x) {
    const auto v = evaluate(x);
    if (!v) {
      ++est.excluded;
      return;
    }
    if (*v > est.value) {
      est.value = *v;
      est.argmax = x;
    }
    if (cfg.ascent_starts == 0) return;
    if (top.size() == cfg.ascent_starts && *v <= top.back().value) return;
    if (std::any_of(top.begin(), top.end(),
                    [&](const Candidate& c) { return max_abs_diff(c.x.values(), x.values()) < 1e-12; }))
      return;
    auto pos = std::upper_bound(top.begin(), top.end(), *v,
                                [](double val, const Candidate& c) { return val > c.value; });
    top.insert(pos, Candidate{*v, x});
    if (top.size() > cfg.ascent_starts) top.pop_back();
  };

  // (a) lattice on Delta^m including its faces.
  if (cfg.grid_per_dim >= 2) {
    const std::size_t total = cfg.grid_per_dim - 1;
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
      for (std::size_t c = 0; c <= left; ++c) {
        parts[i] = c;
        self(self, i + 1, left - c);
      }
    };
    compose(compose, 0, total);

    std::vector<std::size_t> idx(m, 0);
    StateCombination x(m, n);
    while (true) {
      for (std::size_t k = 0; k < m; ++k) std::copy(rows[idx[k]].begin(), rows[idx[k]].end(), x.row(k).begin());
      offer(x);
      ++est.grid_points;
      std::size_t k = m;
      while (k > 0 && ++idx[k - 1] == rows.size()) idx[--k] = 0;
      if (k == 0) break;
    }
  }

  // (b) uniform (flat Dirichlet) samples per population.
  std::mt19937_64 rng(cfg.seed);
  std::exponential_distribution<double> expo(1.0);
  for (std::size_t r = 0; r < cfg.random_samples; ++r) {
    StateCombination x(m, n);
    for (std::size_t k = 0; k < m; ++k) {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) sum += (x(k, i) = expo(rng));
      for (std::size_t i = 0; i < n; ++i) x(k, i) /= sum;
    }
    offer(x);
    ++est.random_points;
  }

  // (c) coordinate ascent: move mass h between two actions of one population.
  for (const Candidate& start : top) {
    StateCombination x = start.x;
    double value = start.value;
    double h = 0.05;
    for (std::size_t it = 0; it < cfg.ascent_iters && h > 1e-12; ++it) {
      std::optional<Candidate> best;
      for (std::size_t k = 0; k < m; ++k) {
        for (std::size_t i = 0; i < n; ++i) {
          const double amount = std::min(h, x(k, i));
          if (amount <= 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            StateCombination trial = x;
            trial(k, i) = amount == x(k, i) ? 0.0 : x(k, i) - amount;
            double rest = 1.0;
            for (std::size_t l = 0; l < n; ++l)
              if (l != j) rest -= trial(k, l);
            trial(k, j) = std::max(0.0, rest);
            ++est.ascent_evaluations;
            const auto v = evaluate(trial);
            if (v && *v > value && (!best || *v > best->value)) best = Candidate{*v, std::move(trial)};
          }
        }
      }
      if (best) {
        x = std::move(best->x);
        value = best->value;
      } else {
        h *= 0.5;
      }
    }
    if (value > est.value) {
      est.value = value;
      est.argmax = x;
    }
  }
  return est;
}

std::vector<StateCombination> polytope_vertices(const Scenario& s, std::span<const double> y_star,
                                                const std::vector<std::vector<std::size_t>>& supports) {
  const SupportSystem sys(s, y_star, supports);
  const auto nv = static_cast<Eigen::Index>(sys.vars.size());
  if (sys.vars.size() > kMaxVertexVariables)
    throw InapplicableError("vertex enumeration limited to " + std::to_string(kMaxVertexVariables) + " variables");

  std::vector<StateCombination> out;
  const Eigen::Index r = matrix_rank(sys.E);
  std::vector<Eigen::Index> pick(static_cast<std::size_t>(r));
  auto visit = [&](auto&& self, std::size_t depth, Eigen::Index from) -> void {
    if (depth == pick.size()) {
      Eigen::MatrixXd B(sys.E.rows(), r);
      for (Eigen::Index c = 0; c < r; ++c) B.col(c) = sys.E.col(pick[static_cast<std::size_t>(c)]);
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(B);
      qr.setThreshold(1e-10);
      if (qr.rank() != r) return;
      const Eigen::VectorXd zb = qr.solve(sys.b);
      if ((B * zb - sys.b).cwiseAbs().maxCoeff() > 1e-9) return;
      if (zb.size() > 0 && zb.minCoeff() < -1e-12) return;
      Eigen::VectorXd z = Eigen::VectorXd::Zero(nv);
      for (Eigen::Index c = 0; c < r; ++c) {
        // Snap solver round-off so pure strategies come out exact.
        double v = std::max(0.0, zb(c));
        if (std::abs(v - std::round(v)) < 1e-10) v = std::round(v);
        z(pick[static_cast<std::size_t>(c)]) = v;
      }
      StateCombination x = sys.to_state(s, z);
      if (!contains_point(out, x)) out.push_back(std::move(x));
      return;
    }
    for (Eigen::Index c = from; c < nv; ++c) {
      pick[depth] = c;
      self(self, depth + 1, c + 1);
    }
  };
  visit(visit, 0, 0);
  return out;
}

F1Check check_f1_on_xbar(const TargetEquilibrium& eq, const Scenario& s, std::size_t samples, std::uint64_t seed,
                         std::size_t burn_in) {
  const auto& y_star = eq.y_star;
  check_target(s, y_star);
  const std::vector<std::size_t> target_support = carrier(y_star);
  const std::vector<std::vector<std::size_t>> supports(s.populations(), target_support);

  F1Check check;
  auto consider = [&](const StateCombination& x) {
    const double f1 = lyapunov_f1(x, eq, s);
    if (f1 < check.f1_min) {
      check.f1_min = f1;
      check.witness = x;
    }
  };

  const SupportSystem sys(s, y_star, supports);
  if (sys.vars.size() <= kMaxVertexVariables) {
    const auto vertices = polytope_vertices(s, y_star, supports);
    if (vertices.empty()) throw InapplicableError("X-bar is empty: the target output is unreachable");
    for (const auto& v : vertices) consider(v);
    check.vertices = vertices.size();
  }

  // Hit-and-run from x^k = y* (relative interior) inside the affine hull.
  Eigen::FullPivLU<Eigen::MatrixXd> lu(sys.E);
  lu.setThreshold(1e-10);
  const Eigen::MatrixXd kernel = lu.kernel();
  const bool trivial = lu.rank() == sys.E.cols();
  check.dimension = trivial ? 0 : static_cast<std::size_t>(kernel.cols());

  Eigen::VectorXd z(static_cast<Eigen::Index>(sys.vars.size()));
  for (std::size_t c = 0; c < sys.vars.size(); ++c) z(static_cast<Eigen::Index>(c)) = y_star[sys.vars[c].second];
  consider(sys.to_state(s, z));
  if (check.dimension == 0) return check;

  const Eigen::MatrixXd basis = Eigen::HouseholderQR<Eigen::MatrixXd>(kernel).householderQ() *
                                Eigen::MatrixXd::Identity(kernel.rows(), kernel.cols());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unit;
  for (std::size_t step = 0; step < burn_in + samples; ++step) {
    Eigen::VectorXd g(basis.cols());
    for (Eigen::Index c = 0; c < g.size(); ++c) g(c) = normal(rng);
    const Eigen::VectorXd dir = (basis * g).normalized();
    double lo = -INFINITY, hi = INFINITY;
    for (Eigen::Index c = 0; c < z.size(); ++c) {
      if (dir(c) > 1e-15) lo = std::max(lo, -z(c) / dir(c));
      else if (dir(c) < -1e-15) hi = std::min(hi, -z(c) / dir(c));
    }
    if (!(hi > lo) || !std::isfinite(lo) || !std::isfinite(hi)) continue;
    z += (lo + (hi - lo) * unit(rng)) * dir;
    z = z.cwiseMax(0.0);
    if (step >= burn_in) {
      consider(sys.to_state(s, z));
      ++check.samples;
    }
  }
  return check;
}

std::vector<TargetEquilibrium> find_target_equilibria(const Scenario& s, const Output& y_star) {
  check_target(s, y_star);
  const std::size_t m = s.populations();
  const std::size_t n = s.actions();

  // Against y = y*, x^k is an equilibrium of the uncontrolled field iff its
  // support lies in one class of actions with equal payoff u^k(e_i, y*).
  std::vector<std::vector<std::vector<std::size_t>>> classes(m);
  for (std::size_t k = 0; k < m; ++k) {
    std::vector<std::pair<double, std::size_t>> pay;
    for (std::size_t i = 0; i < n; ++i) pay.emplace_back(expected_payoff(s, k, i, y_star), i);
    std::sort(pay.begin(), pay.end());
    for (std::size_t a = 0; a < pay.size(); ++a) {
      if (a == 0 || pay[a].first - pay[a - 1].first > kPayoffTieTol) classes[k].emplace_back();
      classes[k].back().push_back(pay[a].second);
    }
    for (auto& c : classes[k]) std::sort(c.begin(), c.end());
  }

  std::vector<StateCombination> points;
  std::vector<std::size_t> choice(m, 0);
  std::vector<std::vector<std::size_t>> supports(m);
  while (true) {
    for (std::size_t k = 0; k < m; ++k) supports[k] = classes[k][choice[k]];
    for (auto& x : polytope_vertices(s, y_star, supports))
      if (!contains_point(points, x)) points.push_back(std::move(x));
    std::size_t k = m;
    while (k > 0 && ++choice[k - 1] == classes[k - 1].size()) choice[--k] = 0;
    if (k == 0) break;
  }

  std::vector<TargetEquilibrium> out;
  for (auto& x : points) {
    if (field_residual(s, x, ControlPolicy{}) > kEquilibriumTol) continue;
    if (max_abs_diff(aggregate_output(x, s), y_star) > kEquilibriumTol) continue;
    out.push_back(TargetEquilibrium::make(std::move(x), y_star));
  }
  return out;
}

double field_residual(const Scenario& s, const StateCombination& x, const ControlPolicy& policy) {
  const Derivative dx = field_controlled(s, x, policy);
  double worst = 0.0;
  for (double v : dx.values()) worst = std::max(worst, std::abs(v));
  return worst;
}

std::vector<std::complex<double>> jacobian_eigenvalues(const Scenario& s, const ControlPolicy& policy,
                                                       const StateCombination& x, double h) {
  const std::size_t m = x.populations();
  const std::size_t n = x.actions();
  const std::size_t dim = m * (n - 1);
  auto reduced_field = [&](const StateCombination& p) {
    const Derivative dx = field_controlled(s, p, policy);
    Eigen::VectorXd out(static_cast<Eigen::Index>(dim));
    for (std::size_t k = 0; k < m; ++k)
      for (std::size_t i = 0; i + 1 < n; ++i) out(static_cast<Eigen::Index>(k * (n - 1) + i)) = dx(k, i);
    return out;
  };
  Eigen::MatrixXd J(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t i = 0; i + 1 < n; ++i) {
      // Moving x^k_i trades mass with the eliminated last action.
      StateCombination plus = x, minus = x;
      plus(k, i) += h;
      plus(k, n - 1) -= h;
      minus(k, i) -= h;
      minus(k, n - 1) += h;
      J.col(static_cast<Eigen::Index>(k * (n - 1) + i)) = (reduced_field(plus) - reduced_field(minus)) / (2.0 * h);
    }
  }
  Eigen::EigenSolver<Eigen::MatrixXd> solver(J, false);
  std::vector<std::complex<double>> out;
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) out.push_back(solver.eigenvalues()(i));
  return out;
}

bool StabilityReport::condition_holds(double d) const {
  return recommendation_made && d > std::max(0.0, sup_dbar_estimate);
}

StabilityReport recommend_d(const Scenario& s, const Output& y_star, const SamplingConfig& cfg) {
  check_target(s, y_star);
  StabilityReport report;
  report.y_star = y_star;
  report.sampling = cfg;
  report.x_star_candidates = find_target_equilibria(s, y_star);
  report.x_star_unique = report.x_star_candidates.size() == 1;
  if (report.x_star_candidates.empty()) {
    report.refusal_reason = "X* is empty: no equilibrium of the uncontrolled dynamics produces the target output";
    return report;
  }
  if (!report.x_star_unique) {
    report.refusal_reason = "X* is not a singleton; the stabilization condition does not apply";
    return report;
  }
  const TargetEquilibrium& eq = report.x_star_candidates.front();

  const F1Check f1 = check_f1_on_xbar(eq, s, cfg.xbar_samples, cfg.seed, cfg.xbar_burn_in);
  report.f1_min_on_xbar = f1.f1_min;
  report.f1_witness = f1.witness;
  report.xbar_vertices = f1.vertices;
  report.xbar_samples = f1.samples;

  const SupEstimate sup = estimate_sup_dbar(eq, s, cfg);
  report.sup_dbar_estimate = sup.value;
  report.argmax_state = sup.argmax;
  report.grid_points = sup.grid_points;
  report.random_points = sup.random_points;
  report.ascent_evaluations = sup.ascent_evaluations;

  if (f1.f1_min < -1e-9) {
    report.refusal_reason = "F1 takes negative values on X-bar";
    return report;
  }
  report.recommended_d = std::max(0.0, sup.value) * (1.0 + kGainMargin) + kGainFloor;
  report.recommendation_made = true;
  return report;
}

nlohmann::json to_json(const StabilityReport& r) {
  using nlohmann::json;
  auto finite_or_null = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json candidates = json::array();
  for (const auto& eq : r.x_star_candidates) candidates.push_back(json{{"x_star", eq.x_star.rows()}, {"carriers", eq.carriers}});
  return json{
      {"y_star", r.y_star},
      {"x_star_candidates", candidates},
      {"x_star_unique", r.x_star_unique},
      {"sup_dbar_estimate", finite_or_null(r.sup_dbar_estimate)},
      {"argmax_state", r.argmax_state.rows()},
      {"f1_min_on_xbar", finite_or_null(r.f1_min_on_xbar)},
      {"f1_witness", r.f1_witness.rows()},
      {"recommendation_made", r.recommendation_made},
      {"recommended_d", r.recommendation_made ? json(r.recommended_d) : json(nullptr)},
      {"refusal_reason", r.refusal_reason},
      {"margin", kGainMargin},
      {"floor", kGainFloor},
      {"sampling",
       {{"grid_per_dim", r.sampling.grid_per_dim},
        {"random_samples", r.sampling.random_samples},
        {"ascent_iters", r.sampling.ascent_iters},
        {"ascent_starts", r.sampling.ascent_starts},
        {"xbar_samples", r.sampling.xbar_samples},
        {"xbar_burn_in", r.sampling.xbar_burn_in},
        {"seed", r.sampling.seed},
        {"tube_radius", r.sampling.tube_radius},
        {"boundary_margin", r.sampling.boundary_margin}}},
      {"counts",
       {{"grid_points", r.grid_points},
        {"random_points", r.random_points},
        {"ascent_evaluations", r.ascent_evaluations},
        {"xbar_vertices", r.xbar_vertices},
        {"xbar_samples", r.xbar_samples}}},
  };
}

}  // namespace repsub
