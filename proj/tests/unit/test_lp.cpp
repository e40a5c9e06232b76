#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "cpla/error.hpp"
#include "cpla/lp.hpp"
#include "lp_oracle.hpp"

using namespace cpla;

namespace {

LinearProgram one_var(double c) {
  LinearProgram lp;
  lp.c = Eigen::VectorXd::Constant(1, c);
  return lp;
}

}  // namespace

TEST_CASE("min x subject to x >= 3") {
  LinearProgram lp = one_var(1.0);
  lp.a = RowMatrix::Constant(1, 1, -1.0);
  lp.u = Eigen::VectorXd::Constant(1, -3.0);
  const LpResult r = solve_lp(lp);
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.z[0] == doctest::Approx(3.0));
  CHECK(r.objective == doctest::Approx(3.0));
  CHECK(r.dual_a[0] == doctest::Approx(1.0));

  LinearProgram bounded = one_var(1.0);
  bounded.lower = Eigen::VectorXd::Constant(1, 3.0);
  CHECK(solve_lp(bounded).z[0] == doctest::Approx(3.0));
}

TEST_CASE("infeasible and unbounded problems are told apart") {
  LinearProgram inf = one_var(1.0);
  inf.a.resize(2, 1);
  inf.a << 1.0, -1.0;
  inf.u = Eigen::Vector2d(1.0, -3.0);
  CHECK(solve_lp(inf).status == LpStatus::Infeasible);

  LinearProgram unb = one_var(-1.0);
  unb.a = RowMatrix::Constant(1, 1, -1.0);
  unb.u = Eigen::VectorXd::Zero(1);
  CHECK(solve_lp(unb).status == LpStatus::Unbounded);

  LinearProgram none = one_var(1.0);
  none.a.resize(0, 1);
  none.u.resize(0);
  CHECK(solve_lp(none).status == LpStatus::Unbounded);

  LinearProgram zero = one_var(0.0);
  zero.a.resize(0, 1);
  zero.u.resize(0);
  CHECK(solve_lp(zero).status == LpStatus::Optimal);
}

TEST_CASE("equality constraints and bounds") {
  // min x + 2y  s.t.  x - y = 1,  x, y >= 0  ->  x = 1, y = 0
  LinearProgram lp;
  lp.c = Eigen::Vector2d(1, 2);
  lp.a.resize(0, 2);
  lp.u.resize(0);
  lp.e.resize(1, 2);
  lp.e << 1, -1;
  lp.v = Eigen::VectorXd::Constant(1, 1.0);
  lp.lower = Eigen::Vector2d::Zero();
  lp.upper = Eigen::Vector2d::Constant(std::numeric_limits<double>::infinity());
  const LpResult r = solve_lp(lp);
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(r.z[0] == doctest::Approx(1.0));
  CHECK(r.z[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(r.objective == doctest::Approx(1.0));
  CHECK(r.dual_e[0] == doctest::Approx(-1.0));
}

TEST_CASE("random small LPs agree with vertex enumeration") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    CAPTURE(trial);
    const LinearProgram lp = oracle::random_bounded_lp(rng, 5, 15, trial % 5 == 0);
    const auto truth = oracle::enumerate_vertices(lp.c, lp.a, lp.u);
    REQUIRE(truth.has_value());
    const LpResult r = solve_lp(lp);
    REQUIRE(r.status == LpStatus::Optimal);
    CHECK(std::abs(r.objective - truth->objective) < 1e-8);
    CHECK((lp.a * r.z - lp.u).maxCoeff() < 1e-9);
  }
}

TEST_CASE("duplicated columns leave a free null-space direction") {
  // z0 and z1 enter identically: rank-deficient constraint matrix, bounded objective
  std::mt19937_64 rng(5);
  LinearProgram lp = oracle::random_bounded_lp(rng, 4, 30, false);
  RowMatrix a(30, 5);
  a.leftCols(4) = lp.a;
  a.col(4) = lp.a.col(0);
  Eigen::VectorXd c(5);
  c << lp.c, lp.c[0];
  LinearProgram dup{c, a, lp.u, {}, {}, {}, {}};
  dup.e.resize(0, 5);
  const LpResult r0 = solve_lp(lp), r1 = solve_lp(dup);
  REQUIRE(r0.status == LpStatus::Optimal);
  REQUIRE(r1.status == LpStatus::Optimal);
  CHECK(r1.objective == doctest::Approx(r0.objective).epsilon(1e-10));
}

TEST_CASE("optimality certificate on a tall LP") {
  std::mt19937_64 rng(99);
  const LinearProgram lp = oracle::random_bounded_lp(rng, 40, 3000, false);
  const LpResult r = solve_lp(lp);
  REQUIRE(r.status == LpStatus::Optimal);
  const Eigen::VectorXd slack = lp.u - lp.a * r.z;
  CHECK(slack.minCoeff() > -1e-9);
  CHECK(r.dual_a.minCoeff() >= 0.0);
  CHECK((lp.a.transpose() * r.dual_a + lp.c).cwiseAbs().maxCoeff() < 1e-8);
  // zero duality gap: c'z = -u'lambda
  CHECK(std::abs(r.objective + lp.u.dot(r.dual_a)) < 1e-8 * (1 + std::abs(r.objective)));
  // repeated solves are bit-identical
  const LpResult again = solve_lp(lp);
  CHECK(again.z == r.z);
  CHECK(again.iterations == r.iterations);
}

TEST_CASE("degenerate vertex with many tight constraints terminates") {
  // all constraints pass through the origin: a pointed cone, optimum 0
  std::mt19937_64 rng(7);
  LinearProgram lp = oracle::random_bounded_lp(rng, 6, 200, false);
  lp.u.setZero();
  const LpResult r = solve_lp(lp);
  REQUIRE(r.status == LpStatus::Optimal);
  CHECK(std::abs(r.objective) < 1e-10);
}

TEST_CASE("malformed programs are rejected") {
  LinearProgram lp = one_var(1.0);
  lp.a = RowMatrix::Constant(2, 1, 1.0);
  lp.u = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(solve_lp(lp), ValidationError);
}

TEST_CASE("randomized and Bland pivoting reach the same optimum") {
  std::mt19937_64 rng(31);
  SimplexOptions random_opts;
  random_opts.stall_limit = 0;
  SimplexOptions bland_opts;
  bland_opts.stall_limit = 0;
  bland_opts.bland_limit = 0;
  const RevisedSimplex randomized(random_opts), bland(bland_opts);
  for (int trial = 0; trial < 20; ++trial) {
    CAPTURE(trial);
    const LinearProgram lp = oracle::random_bounded_lp(rng, 6, 60, trial % 2 == 0);
    const LpResult ref = solve_lp(lp);
    REQUIRE(ref.status == LpStatus::Optimal);
    for (const LpSolver* s : {static_cast<const LpSolver*>(&randomized), static_cast<const LpSolver*>(&bland)}) {
      const LpResult r = solve_lp(lp, s);
      REQUIRE(r.status == LpStatus::Optimal);
      CHECK(std::abs(r.objective - ref.objective) < 1e-8);
    }
  }
}
