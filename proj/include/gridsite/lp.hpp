#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace gridsite {

/// min c'x  s.t.  row_lower <= A x <= row_upper,  col_lower <= x <= col_upper.
/// Infinite bounds are allowed; the solver boxes them internally.
class LpProblem {
 public:
  int add_col(double lower, double upper, double cost = 0.0);
  int add_row(const std::vector<std::pair<int, double>>& entries, double lower, double upper);

  int num_cols() const { return static_cast<int>(col_lower.size()); }
  int num_rows() const { return static_cast<int>(row_lower.size()); }

  std::vector<double> col_lower, col_upper, cost;
  std::vector<double> row_lower, row_upper;
  std::vector<std::vector<std::pair<int, double>>> rows;
  double objective_offset = 0.0;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit, Numerical };

std::string to_string(LpStatus status);

enum class BasisStatus : std::uint8_t { Basic, AtLower, AtUpper };

/// Snapshot of a simplex basis. A basis with fewer rows than the problem is extended with
/// basic logicals for the new rows, which keeps it usable after cuts are appended.
struct LpBasis {
  std::vector<BasisStatus> cols;
  std::vector<BasisStatus> rows;
  bool empty() const { return cols.empty(); }
};

struct LpOptions {
  int max_iterations = 200000;
  double primal_tol = 1e-9;
  double dual_tol = 1e-9;
  int refactor_every = 100;
  bool perturb = true;
};

struct LpResult {
  LpStatus status = LpStatus::Numerical;
  double objective = 0.0;
  std::vector<double> x;
  std::vector<double> row_activity;
  std::vector<double> duals;          // one per row, d objective / d rhs
  std::vector<double> reduced_costs;  // one per column
  LpBasis basis;
  int iterations = 0;
};

/// Bounded dual simplex with an explicit basis inverse. A warm basis is repaired by bound
/// flipping; a singular one is replaced by the slack basis.
LpResult solve_lp(const LpProblem& problem, const LpOptions& options = {}, const LpBasis* warm = nullptr);

/// Repeated solves over fixed rows and bounds with a changing objective. Each solve continues from
/// the previous basis and factorization.
class LpSession {
 public:
  explicit LpSession(LpProblem problem, const LpOptions& options = {});
  ~LpSession();
  LpSession(const LpSession&) = delete;
  LpSession& operator=(const LpSession&) = delete;

  /// `warm` is only consulted on the first call.
  LpResult solve(const std::vector<double>& cost, const LpBasis* warm = nullptr);
  const LpProblem& problem() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  bool started_ = false;
};

}  // namespace gridsite
