#pragma once

#include <cstddef>
#include <memory>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "cpla/netcase.hpp"

namespace cpla {

/// Ordering of the reduced state y = [theta; V] and of the matching
/// injection vector x = [P; Q]: angles and active injections at every
/// non-slack bus, magnitudes and reactive injections at every PQ bus, both
/// in ascending internal bus order.
struct StateLayout {
  std::size_t n_bus = 0;
  std::size_t slack = 0;
  std::vector<std::size_t> theta_buses;
  std::vector<std::size_t> vm_buses;
  std::vector<int> theta_pos;  // per bus, -1 when the angle is fixed
  std::vector<int> vm_pos;  // per bus, index into y, -1 when fixed

  std::size_t n_theta() const { return theta_buses.size(); }
  std::size_t size() const { return theta_buses.size() + vm_buses.size(); }
};

StateLayout make_layout(const NetworkCase& net);

/// Full-length bus voltages; angles in radians.
struct StateVector {
  std::vector<double> vm;
  std::vector<double> va;
};

/// x = [P; Q] in pu, ordered per StateLayout.
using InjectionVector = Eigen::VectorXd;

struct PowerFlowSolution {
  StateVector state;
  bool converged = false;
  int iterations = 0;
  double max_mismatch = 0.0;
};

enum class LinearSolverKind { Auto, Dense, Sparse };
enum class StartKind { Flat, Nominal, Warm };

StartKind start_kind_from_string(std::string_view s);

struct PowerFlowOptions {
  double tol = 1e-8;
  int max_iter = 20;
  LinearSolverKind linear_solver = LinearSolverKind::Auto;
  // Auto picks dense LU up to this many buses, sparse LU above.
  std::size_t dense_bus_limit = 60;
};

/// LU factorisation of a Jacobian, dense or sparse. Throws NumericalError
/// from factor() when the matrix is numerically singular.
class JacobianFactor {
 public:
  JacobianFactor();
  ~JacobianFactor();
  JacobianFactor(JacobianFactor&&) noexcept;
  JacobianFactor& operator=(JacobianFactor&&) noexcept;

  void factor(const Eigen::SparseMatrix<double>& jac, bool dense);
  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd solve_transpose(const Eigen::VectorXd& rhs) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Case-derived data for evaluating the power flow equations: layout,
/// admittance matrix, fixed voltages and nominal injections. Immutable after
/// construction and safe to share between threads.
class PowerFlowModel {
 public:
  explicit PowerFlowModel(NetworkCase net);

  const NetworkCase& network() const { return net_; }
  const StateLayout& layout() const { return layout_; }
  const AdmittanceMatrix& admittance() const { return ybus_; }
  std::size_t n_state() const { return layout_.size(); }

  /// P and Q at every bus (pu) for the given voltages.
  void bus_injections(const StateVector& s, std::vector<double>& p, std::vector<double>& q) const;

  /// g(y): bus injections restricted to the x layout.
  InjectionVector reduced_injections(const StateVector& s) const;

  /// Analytic d g / d y, rows ordered like x, columns like y.
  Eigen::SparseMatrix<double> jacobian(const StateVector& s) const;

  InjectionVector nominal_injections() const { return x0_; }

  /// x for the scheduled generation and the given per-bus loads (pu).
  InjectionVector injections_for_loads(const std::vector<double>& pd, const std::vector<double>& qd) const;

  StateVector flat_start() const;
  StateVector nominal_start() const;

  Eigen::VectorXd pack(const StateVector& s) const;
  /// Writes y back into the free entries of `s`, leaving fixed entries alone.
  void unpack(const Eigen::VectorXd& y, StateVector& s) const;

  bool use_dense(const PowerFlowOptions& opts) const;

 private:
  NetworkCase net_;
  StateLayout layout_;
  AdmittanceMatrix ybus_;
  std::vector<double> vm_fixed_;
  std::vector<double> pg_;
  std::vector<double> qg_;
  double slack_angle_ = 0.0;
  InjectionVector x0_;
};

/// Newton-Raphson in polar coordinates. Returns a non-converged solution
/// (never throws) when the iteration limit is hit or the iterate blows up;
/// throws NumericalError("singular Jacobian at iteration k") otherwise.
PowerFlowSolution solve_power_flow(const PowerFlowModel& model, const InjectionVector& inj,
                                   const StateVector& start, const PowerFlowOptions& opts = {});

}  // namespace cpla
