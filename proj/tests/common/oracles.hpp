#pragma once

// Independent numerical references shared by the unit and acceptance tests.
// Everything here goes through the power flow equations or the Newton
// solver only, never through the analytic derivative code under test.

#include <algorithm>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "cpla/acpf.hpp"
#include "cpla/sens.hpp"

namespace cpla::oracle {

inline StateVector random_state(const PowerFlowModel& model, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ang(-0.3, 0.3), mag(0.9, 1.1);
  StateVector s = model.flat_start();
  for (std::size_t i : model.layout().theta_buses) s.va[i] = ang(rng);
  for (std::size_t i : model.layout().vm_buses) s.vm[i] = mag(rng);
  return s;
}

// Central-difference Jacobian of g(y).
inline Eigen::MatrixXd fd_jacobian(const PowerFlowModel& model, const StateVector& s, double h) {
  const Eigen::VectorXd y0 = model.pack(s);
  const auto n = y0.size();
  Eigen::MatrixXd jac(n, n);
  StateVector work = s;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd y = y0;
    y[j] += h;
    model.unpack(y, work);
    const Eigen::VectorXd up = model.reduced_injections(work);
    y[j] -= 2 * h;
    model.unpack(y, work);
    const Eigen::VectorXd dn = model.reduced_injections(work);
    jac.col(j) = (up - dn) / (2 * h);
  }
  return jac;
}

// Central difference of the analytic Jacobian along y_j. Entry (m, i) of
// the result approximates d2 g_m / dy_i dy_j.
inline Eigen::MatrixXd fd_hessian_column(const PowerFlowModel& model, const StateVector& s, Eigen::Index j, double h) {
  Eigen::VectorXd y = model.pack(s);
  StateVector work = s;
  y[j] += h;
  model.unpack(y, work);
  const Eigen::MatrixXd up(model.jacobian(work));
  y[j] -= 2 * h;
  model.unpack(y, work);
  const Eigen::MatrixXd dn(model.jacobian(work));
  return (up - dn) / (2 * h);
}

// Worst per-equation relative deviation between an analytic Hessian stack
// and central differences of the Jacobian.
inline double hessian_deviation(const PowerFlowModel& model, const StateVector& s, const HessianStack& stack,
                                double h) {
  const auto n = static_cast<Eigen::Index>(model.n_state());
  Eigen::VectorXd diff = Eigen::VectorXd::Zero(n), scale = Eigen::VectorXd::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const Eigen::MatrixXd fd = fd_hessian_column(model, s, j, h);
    Eigen::MatrixXd an = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index m = 0; m < n; ++m) {
      const LocalHessian& lh = stack.eq[static_cast<std::size_t>(m)];
      auto it = std::find(lh.vars.begin(), lh.vars.end(), static_cast<int>(j));
      if (it == lh.vars.end()) continue;
      const auto b = static_cast<Eigen::Index>(it - lh.vars.begin());
      for (std::size_t a = 0; a < lh.vars.size(); ++a) an(m, lh.vars[a]) = lh.h(static_cast<Eigen::Index>(a), b);
    }
    for (Eigen::Index m = 0; m < n; ++m) {
      diff[m] = std::max(diff[m], (an.row(m) - fd.row(m)).cwiseAbs().maxCoeff());
      scale[m] = std::max(scale[m], an.row(m).cwiseAbs().maxCoeff());
    }
  }
  double worst = 0.0;
  for (Eigen::Index m = 0; m < n; ++m) worst = std::max(worst, scale[m] > 0 ? diff[m] / scale[m] : diff[m]);
  return worst;
}

// Newton solve polished to the floating-point floor, for finite differences
// of the solved state.
inline StateVector solve_polished(const PowerFlowModel& model, const InjectionVector& x, const StateVector& start) {
  PowerFlowOptions opts;
  opts.tol = 0.0;
  opts.max_iter = 8;
  const PowerFlowSolution sol = solve_power_flow(model, x, start, opts);
  if (!(sol.max_mismatch < 1e-11)) throw std::runtime_error("oracle solve did not reach the mismatch floor");
  return sol.state;
}

// Second central differences of the solved V_k with respect to x:
//   [f(+i+j) - f(+i-j) - f(-i+j) + f(-i-j)] / (4 h^2)
inline Eigen::MatrixXd fd_voltage_hessian(const PowerFlowModel& model, const StateVector& base, std::size_t bus,
                                          double h) {
  const InjectionVector x0 = model.reduced_injections(base);
  const auto n = x0.size();
  auto f = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
    InjectionVector x = x0;
    x[i] += si * h;
    x[j] += sj * h;
    return solve_polished(model, x, base).vm[bus];
  };
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      const double v = (f(i, 1, j, 1) - f(i, 1, j, -1) - f(i, -1, j, 1) + f(i, -1, j, -1)) / (4 * h * h);
      out(i, j) = v;
      out(j, i) = v;
    }
  return out;
}

}  // namespace cpla::oracle
