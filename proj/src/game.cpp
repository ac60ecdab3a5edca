#include "repsub/game.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace repsub {

namespace {

constexpr double kShareSumTol = 1e-12;

std::string field(std::size_t k, const std::string& name) {
  std::ostringstream os;
  os << "populations[" << k << "]." << name;
  return os.str();
}

}  // namespace

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.front().size();
  Matrix out(r, c);
  for (std::size_t i = 0; i < r; ++i) {
    if (rows[i].size() != c) throw ScenarioError("ragged matrix row " + std::to_string(i));
    std::copy(rows[i].begin(), rows[i].end(), out.data_.begin() + static_cast<std::ptrdiff_t>(i * c));
  }
  return out;
}

double Scenario::max_payoff() const {
  double best = -INFINITY;
  for (const auto& a : payoffs_)
    for (double v : a.values()) best = std::max(best, v);
  return best;
}

double Scenario::min_payoff() const {
  double best = INFINITY;
  for (const auto& a : payoffs_)
    for (double v : a.values()) best = std::min(best, v);
  return best;
}

ScenarioDescription Scenario::describe() const {
  ScenarioDescription out;
  for (std::size_t k = 0; k < populations(); ++k) {
    PopulationSpec p;
    p.share = shares_[k];
    for (std::size_t i = 0; i < actions_; ++i) {
      auto r = payoffs_[k].row(i);
      p.payoff.emplace_back(r.begin(), r.end());
    }
    out.populations.push_back(std::move(p));
  }
  return out;
}

std::vector<std::vector<double>> PopulationArray::rows() const {
  std::vector<std::vector<double>> out;
  out.reserve(m_);
  for (std::size_t k = 0; k < m_; ++k) {
    auto r = row(k);
    out.emplace_back(r.begin(), r.end());
  }
  return out;
}

StateCombination StateCombination::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ScenarioError("state has no populations");
  StateCombination x(rows.size(), rows.front().size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k].size() != x.n_) throw ScenarioError("state row " + std::to_string(k) + " has wrong length");
    std::copy(rows[k].begin(), rows[k].end(), x.row(k).begin());
  }
  return x;
}

StateCombination StateCombination::from_first_action_shares(std::span<const double> shares) {
  StateCombination x(shares.size(), 2);
  for (std::size_t k = 0; k < shares.size(); ++k) {
    x(k, 0) = shares[k];
    x(k, 1) = 1.0 - shares[k];
  }
  return x;
}

StateCombination StateCombination::uniform(std::size_t m, std::span<const double> z) {
  StateCombination x(m, z.size());
  for (std::size_t k = 0; k < m; ++k) std::copy(z.begin(), z.end(), x.row(k).begin());
  return x;
}

Scenario validate_scenario(const ScenarioDescription& raw) {
  const auto& pops = raw.populations;
  if (pops.size() < 2)
    throw ScenarioError("populations: at least 2 populations required, got " + std::to_string(pops.size()));
  const std::size_t n = pops.front().payoff.size();
  if (n < 2) throw ScenarioError(field(0, "payoff") + ": at least 2 actions required");

  Scenario s;
  s.actions_ = n;
  double total = 0.0;
  for (std::size_t k = 0; k < pops.size(); ++k) {
    const auto& p = pops[k];
    if (!std::isfinite(p.share) || p.share <= 0.0 || p.share >= 1.0)
      throw ScenarioError(field(k, "share") + ": must lie strictly between 0 and 1");
    total += p.share;
    if (p.payoff.size() != n)
      throw ScenarioError(field(k, "payoff") + ": expected " + std::to_string(n) + " rows");
    for (std::size_t i = 0; i < n; ++i) {
      if (p.payoff[i].size() != n)
        throw ScenarioError(field(k, "payoff") + "[" + std::to_string(i) + "]: expected " +
                            std::to_string(n) + " columns");
      for (std::size_t j = 0; j < n; ++j)
        if (!std::isfinite(p.payoff[i][j]))
          throw ScenarioError(field(k, "payoff") + "[" + std::to_string(i) + "][" + std::to_string(j) +
                              "]: non-finite entry");
    }
    s.shares_.push_back(p.share);
    s.payoffs_.push_back(Matrix::from_rows(p.payoff));
  }
  if (std::abs(total - 1.0) > kShareSumTol) {
    std::ostringstream os;
    os.precision(17);
    os << "populations: shares sum to " << total << ", expected 1";
    throw ScenarioError(os.str());
  }
  return s;
}

bool in_simplex(std::span<const double> z, double sum_tol) {
  double total = 0.0;
  for (double v : z) {
    if (!std::isfinite(v) || v < kSimplexLowerTol) return false;
    total += v;
  }
  return std::abs(total - 1.0) <= sum_tol;
}

void check_state(const Scenario& s, const StateCombination& x) {
  if (x.populations() != s.populations() || x.actions() != s.actions())
    throw ScenarioError("state shape does not match scenario");
  for (std::size_t k = 0; k < x.populations(); ++k)
    if (!in_simplex(x.row(k)))
      throw ScenarioError("state row " + std::to_string(k) + " is not in the simplex");
}

Output aggregate_output(const StateCombination& x, const Scenario& s) {
  Output y(x.actions(), 0.0);
  for (std::size_t k = 0; k < x.populations(); ++k) {
    const double v = s.share(k);
    auto r = x.row(k);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += v * r[i];
  }
  return y;
}

double expected_payoff(const Scenario& s, std::size_t k, std::size_t i, std::span<const double> y) {
  auto r = s.payoff(k).row(i);
  return std::inner_product(r.begin(), r.end(), y.begin(), 0.0);
}

double average_payoff(const Scenario& s, std::size_t k, std::span<const double> xk,
                      std::span<const double> y) {
  double total = 0.0;
  for (std::size_t i = 0; i < xk.size(); ++i) total += xk[i] * expected_payoff(s, k, i, y);
  return total;
}

Scenario local_shift(const Scenario& s, std::size_t k, std::size_t j, double b) {
  if (k >= s.populations() || j >= s.actions()) throw std::out_of_range("local_shift index");
  Scenario out = s;
  Matrix& a = out.payoffs_[k];
  for (std::size_t i = 0; i < a.rows(); ++i) a(i, j) += b;
  return out;
}

std::vector<std::size_t> carrier(std::span<const double> z, double threshold) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i] > threshold) out.push_back(i);
  return out;
}

}  // namespace repsub
