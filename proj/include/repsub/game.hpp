#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace repsub {

/// Aggregate action shares y, or a target output y*.
using Output = std::vector<double>;

/// Thrown when a scenario or state description violates its invariants.
class ScenarioError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Small dense row-major matrix. Payoff matrices are n x n with n tiny.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> values() const { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Unvalidated population entry as read from a configuration document.
struct PopulationSpec {
  double share = 0.0;
  std::vector<std::vector<double>> payoff;
};

struct ScenarioDescription {
  std::vector<PopulationSpec> populations;
};

/// Validated multipopulation game: m populations with shares v^k summing to
/// one, each with its own n x n payoff matrix A^k. Immutable once built.
class Scenario {
 public:
  std::size_t populations() const { return shares_.size(); }
  std::size_t actions() const { return actions_; }

  double share(std::size_t k) const { return shares_[k]; }
  std::span<const double> shares() const { return shares_; }
  const Matrix& payoff(std::size_t k) const { return payoffs_[k]; }

  /// Largest and smallest entry over every A^k.
  double max_payoff() const;
  double min_payoff() const;

  ScenarioDescription describe() const;

  bool operator==(const Scenario&) const = default;

 private:
  friend Scenario validate_scenario(const ScenarioDescription& raw);
  friend Scenario local_shift(const Scenario& s, std::size_t k, std::size_t j, double b);

  std::size_t actions_ = 0;
  std::vector<double> shares_;
  std::vector<Matrix> payoffs_;
};

/// Shares of every action in every population, stored population-major.
/// The shape is fixed at construction; `Derivative` shares the layout.
class PopulationArray {
 public:
  PopulationArray() = default;
  PopulationArray(std::size_t m, std::size_t n, double fill = 0.0)
      : m_(m), n_(n), data_(m * n, fill) {}

  std::size_t populations() const { return m_; }
  std::size_t actions() const { return n_; }

  double operator()(std::size_t k, std::size_t i) const { return data_[k * n_ + i]; }
  double& operator()(std::size_t k, std::size_t i) { return data_[k * n_ + i]; }

  std::span<const double> row(std::size_t k) const { return {data_.data() + k * n_, n_}; }
  std::span<double> row(std::size_t k) { return {data_.data() + k * n_, n_}; }

  std::span<const double> values() const { return data_; }
  std::span<double> values() { return data_; }

  std::vector<std::vector<double>> rows() const;

  bool operator==(const PopulationArray&) const = default;

 protected:
  std::size_t m_ = 0;
  std::size_t n_ = 0;
  std::vector<double> data_;
};

/// x in Delta^m; each row is one population's action distribution.
class StateCombination : public PopulationArray {
 public:
  using PopulationArray::PopulationArray;

  static StateCombination from_rows(const std::vector<std::vector<double>>& rows);

  /// Two-action shorthand: one entry per population, the share of action 1.
  static StateCombination from_first_action_shares(std::span<const double> shares);

  /// Every population playing the same mixture z.
  static StateCombination uniform(std::size_t m, std::span<const double> z);

  bool operator==(const StateCombination&) const = default;
};

/// Time derivative of a StateCombination; rows are tangent to the simplex.
class Derivative : public PopulationArray {
 public:
  using PopulationArray::PopulationArray;
  bool operator==(const Derivative&) const = default;
};

inline constexpr double kSimplexSumTol = 1e-9;
inline constexpr double kSimplexLowerTol = -1e-12;
inline constexpr double kCarrierThreshold = 1e-12;

Scenario validate_scenario(const ScenarioDescription& raw);

/// True when z is a point of the simplex within the membership tolerances.
bool in_simplex(std::span<const double> z, double sum_tol = kSimplexSumTol);

/// Throws ScenarioError unless x has the scenario's shape and every row is in
/// the simplex.
void check_state(const Scenario& s, const StateCombination& x);

/// y_i = sum_k v^k x^k_i.
Output aggregate_output(const StateCombination& x, const Scenario& s);

/// u^k(e_i, y) = e_i^T A^k y.
double expected_payoff(const Scenario& s, std::size_t k, std::size_t i, std::span<const double> y);

/// u^k(x^k, y) = (x^k)^T A^k y.
double average_payoff(const Scenario& s, std::size_t k, std::span<const double> xk,
                      std::span<const double> y);

/// Copy of s with b added to every entry of column j of A^k.
Scenario local_shift(const Scenario& s, std::size_t k, std::size_t j, double b);

/// Indices with z_i above the carrier threshold.
std::vector<std::size_t> carrier(std::span<const double> z, double threshold = kCarrierThreshold);

}  // namespace repsub
