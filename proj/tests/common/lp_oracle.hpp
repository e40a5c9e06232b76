#pragma once

// Exhaustive basic-solution enumeration for tiny LPs in the form
// min c'z s.t. A z <= u, z free. Every n-subset of rows is solved as an
// equality system; the best feasible vertex is the optimum whenever the
// LP is bounded and A has full column rank.

#include <limits>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "cpla/lp.hpp"

namespace cpla::oracle {

struct VertexOptimum {
  double objective = std::numeric_limits<double>::infinity();
  Eigen::VectorXd z;
};

inline std::optional<VertexOptimum> enumerate_vertices(const Eigen::VectorXd& c, const RowMatrix& a,
                                                       const Eigen::VectorXd& u, double tol = 1e-9) {
  const auto m = a.rows(), n = a.cols();
  std::vector<Eigen::Index> pick(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) pick[std::size_t(i)] = i;
  std::optional<VertexOptimum> best;
  for (;;) {
    Eigen::MatrixXd sub(n, n);
    Eigen::VectorXd rhs(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      sub.row(i) = a.row(pick[std::size_t(i)]);
      rhs[i] = u[pick[std::size_t(i)]];
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sub);
    if (lu.rank() == n) {
      const Eigen::VectorXd z = lu.solve(rhs);
      if (((a * z - u).array() <= tol).all()) {
        const double obj = c.dot(z);
        if (!best || obj < best->objective) best = VertexOptimum{obj, z};
      }
    }
    // next combination in lexicographic order
    Eigen::Index i = n - 1;
    while (i >= 0 && pick[std::size_t(i)] == m - n + i) --i;
    if (i < 0) break;
    ++pick[std::size_t(i)];
    for (Eigen::Index j = i + 1; j < n; ++j) pick[std::size_t(j)] = pick[std::size_t(j - 1)] + 1;
  }
  return best;
}

// Random bounded, feasible LP: the origin is feasible (u > 0) and -c is a
// nonnegative combination of rows, so the objective is bounded below.
// `degenerate` duplicates rows and puts several constraints through the origin.
inline LinearProgram random_bounded_lp(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m, bool degenerate) {
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> ud(0.1, 1.0);
  LinearProgram lp;
  lp.a.resize(m, n);
  lp.u.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index k = 0; k < n; ++k) lp.a(i, k) = nd(rng);
    lp.u[i] = ud(rng);
  }
  if (degenerate) {
    lp.a.row(m - 1) = lp.a.row(0);
    lp.u[m - 1] = lp.u[0];
    for (Eigen::Index i = 1; i < std::min<Eigen::Index>(n + 2, m - 1); ++i) lp.u[i] = 0.0;
  }
  lp.c = Eigen::VectorXd::Zero(n);
  std::uniform_int_distribution<Eigen::Index> pick(0, m - 1);
  for (Eigen::Index k = 0; k < n; ++k) lp.c -= ud(rng) * lp.a.row(pick(rng)).transpose();
  return lp;
}

}  // namespace cpla::oracle
