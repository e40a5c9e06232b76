#pragma once

#include <cstddef>
#include <string>

#include <Eigen/Dense>

#include "cpla/matrix.hpp"

namespace cpla {

/// min c'z  s.t.  A z <= u,  E z = v,  lower <= z <= upper.
/// E, lower and upper may be empty; bounds may hold +-infinity.
struct LinearProgram {
  Eigen::VectorXd c;
  RowMatrix a;
  Eigen::VectorXd u;
  RowMatrix e;
  Eigen::VectorXd v;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  std::size_t n_vars() const { return static_cast<std::size_t>(c.size()); }
  void validate() const;
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit };

std::string to_string(LpStatus s);

struct LpResult {
  LpStatus status = LpStatus::Infeasible;
  Eigen::VectorXd z;
  double objective = 0.0;
  Eigen::VectorXd dual_a;  // multipliers of A z <= u (>= 0)
  Eigen::VectorXd dual_e;  // multipliers of E z = v
  std::size_t iterations = 0;
};

class LpSolver {
 public:
  virtual ~LpSolver() = default;
  virtual LpResult solve(const LinearProgram& lp) const = 0;
};

struct SimplexOptions {
  double feas_tol = 1e-9;
  double opt_tol = 1e-9;
  double pivot_tol = 1e-9;
  std::size_t max_iter = 200000;
  std::size_t refactor_every = 100;
  // Pivots without objective progress before switching to randomized
  // pivoting, and then to Bland's rule.
  std::size_t stall_limit = 10000;
  std::size_t bland_limit = 50000;
};

/// Dense revised simplex on the dual of the inequality form. The basis
/// holds n active constraints, so the work per pivot is O(n^2) plus one
/// O(m n) pricing pass; suited to few variables and many constraints.
class RevisedSimplex : public LpSolver {
 public:
  explicit RevisedSimplex(SimplexOptions opts = {}) : opts_(opts) {}
  LpResult solve(const LinearProgram& lp) const override;

 private:
  SimplexOptions opts_;
};

/// Solves with `solver`, or a default RevisedSimplex when null.
LpResult solve_lp(const LinearProgram& lp, const LpSolver* solver = nullptr);

}  // namespace cpla
