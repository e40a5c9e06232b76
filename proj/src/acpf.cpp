#include "cpla/acpf.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "cpla/error.hpp"

namespace cpla {

StartKind start_kind_from_string(std::string_view s) {
  if (s == "flat") return StartKind::Flat;
  if (s == "nominal") return StartKind::Nominal;
  if (s == "warm") return StartKind::Warm;
  throw ValidationError("unknown power flow start '" + std::string(s) + "' (expected flat|nominal|warm)");
}

StateLayout make_layout(const NetworkCase& net) {
  StateLayout lay;
  lay.n_bus = net.buses.size();
  lay.theta_pos.assign(lay.n_bus, -1);
  lay.vm_pos.assign(lay.n_bus, -1);
  for (std::size_t i = 0; i < lay.n_bus; ++i) {
    const BusKind kind = net.buses[i].kind;
    if (kind == BusKind::Slack) {
      lay.slack = i;
      continue;
    }
    lay.theta_pos[i] = static_cast<int>(lay.theta_buses.size());
    lay.theta_buses.push_back(i);
  }
  for (std::size_t i = 0; i < lay.n_bus; ++i) {
    if (net.buses[i].kind != BusKind::PQ) continue;
    lay.vm_pos[i] = static_cast<int>(lay.theta_buses.size() + lay.vm_buses.size());
    lay.vm_buses.push_back(i);
  }
  return lay;
}

// --- JacobianFactor --------------------------------------------------------

struct JacobianFactor::Impl {
  bool dense = true;
  Eigen::PartialPivLU<Eigen::MatrixXd> dense_lu;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> sparse_lu;
};

JacobianFactor::JacobianFactor() : impl_(std::make_unique<Impl>()) {}
JacobianFactor::~JacobianFactor() = default;
JacobianFactor::JacobianFactor(JacobianFactor&&) noexcept = default;
JacobianFactor& JacobianFactor::operator=(JacobianFactor&&) noexcept = default;

void JacobianFactor::factor(const Eigen::SparseMatrix<double>& jac, bool dense) {
  impl_->dense = dense;
  if (jac.rows() == 0) return;
  if (dense) {
    impl_->dense_lu.compute(Eigen::MatrixXd(jac));
    // Partial pivoting never fails outright; a vanishing pivot relative to
    // the largest one means the matrix is singular to working precision.
    const auto& lu = impl_->dense_lu.matrixLU();
    const double biggest = lu.diagonal().cwiseAbs().maxCoeff();
    const double smallest = lu.diagonal().cwiseAbs().minCoeff();
    if (!(smallest > 1e-13 * biggest)) throw NumericalError("singular Jacobian");
  } else {
    Eigen::SparseMatrix<double> a = jac;
    a.makeCompressed();
    impl_->sparse_lu.compute(a);
    if (impl_->sparse_lu.info() != Eigen::Success) throw NumericalError("singular Jacobian");
  }
}

Eigen::VectorXd JacobianFactor::solve(const Eigen::VectorXd& rhs) const {
  if (rhs.size() == 0) return rhs;
  if (impl_->dense) return impl_->dense_lu.solve(rhs);
  return impl_->sparse_lu.solve(rhs);
}

Eigen::MatrixXd JacobianFactor::solve(const Eigen::MatrixXd& rhs) const {
  if (rhs.size() == 0) return rhs;
  if (impl_->dense) return impl_->dense_lu.solve(rhs);
  return impl_->sparse_lu.solve(rhs);
}

Eigen::VectorXd JacobianFactor::solve_transpose(const Eigen::VectorXd& rhs) const {
  if (rhs.size() == 0) return rhs;
  if (impl_->dense) return impl_->dense_lu.transpose().solve(rhs);
  return impl_->sparse_lu.transpose().solve(rhs);
}

// --- PowerFlowModel --------------------------------------------------------

PowerFlowModel::PowerFlowModel(NetworkCase net)
    : net_(std::move(net)), layout_(make_layout(net_)), ybus_(build_admittance(net_)) {
  vm_fixed_ = voltage_setpoints(net_);
  slack_angle_ = net_.buses[layout_.slack].va0 * std::numbers::pi / 180.0;

  const BusIndexMap index = make_bus_index(net_);
  pg_.assign(net_.n_bus(), 0.0);
  qg_.assign(net_.n_bus(), 0.0);
  for (const Generator& g : net_.gens) {
    if (!g.in_service) continue;
    pg_[index.at(g.bus)] += g.pg / net_.base_mva;
    qg_[index.at(g.bus)] += g.qg / net_.base_mva;
  }
  std::vector<double> pd(net_.n_bus()), qd(net_.n_bus());
  for (std::size_t i = 0; i < net_.n_bus(); ++i) {
    pd[i] = net_.buses[i].pd / net_.base_mva;
    qd[i] = net_.buses[i].qd / net_.base_mva;
  }
  x0_ = injections_for_loads(pd, qd);
}

InjectionVector PowerFlowModel::injections_for_loads(const std::vector<double>& pd,
                                                     const std::vector<double>& qd) const {
  InjectionVector x(static_cast<Eigen::Index>(layout_.size()));
  for (std::size_t j = 0; j < layout_.theta_buses.size(); ++j) {
    const std::size_t i = layout_.theta_buses[j];
    x[static_cast<Eigen::Index>(j)] = pg_[i] - pd[i];
  }
  for (std::size_t j = 0; j < layout_.vm_buses.size(); ++j) {
    const std::size_t i = layout_.vm_buses[j];
    x[static_cast<Eigen::Index>(layout_.n_theta() + j)] = qg_[i] - qd[i];
  }
  return x;
}

void PowerFlowModel::bus_injections(const StateVector& s, std::vector<double>& p, std::vector<double>& q) const {
  const std::size_t n = ybus_.n;
  p.assign(n, 0.0);
  q.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double pi = 0.0, qi = 0.0;
    for (std::size_t e = ybus_.row_begin(i); e < ybus_.row_end(i); ++e) {
      const std::size_t k = ybus_.col[e];
      const double th = s.va[i] - s.va[k];
      const double c = std::cos(th), sn = std::sin(th);
      pi += s.vm[k] * (ybus_.g[e] * c + ybus_.b[e] * sn);
      qi += s.vm[k] * (ybus_.g[e] * sn - ybus_.b[e] * c);
    }
    p[i] = s.vm[i] * pi;
    q[i] = s.vm[i] * qi;
  }
}

InjectionVector PowerFlowModel::reduced_injections(const StateVector& s) const {
  std::vector<double> p, q;
  bus_injections(s, p, q);
  InjectionVector x(static_cast<Eigen::Index>(layout_.size()));
  for (std::size_t j = 0; j < layout_.theta_buses.size(); ++j) x[static_cast<Eigen::Index>(j)] = p[layout_.theta_buses[j]];
  for (std::size_t j = 0; j < layout_.vm_buses.size(); ++j)
    x[static_cast<Eigen::Index>(layout_.n_theta() + j)] = q[layout_.vm_buses[j]];
  return x;
}

Eigen::SparseMatrix<double> PowerFlowModel::jacobian(const StateVector& s) const {
  std::vector<double> p, q;
  bus_injections(s, p, q);
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(4 * ybus_.col.size());
  const auto& lay = layout_;

  for (std::size_t i = 0; i < ybus_.n; ++i) {
    const int rp = lay.theta_pos[i];  // row of P_i
    const int rq = lay.vm_pos[i];  // row of Q_i
    if (rp < 0 && rq < 0) continue;
    const double vi = s.vm[i];
    for (std::size_t e = ybus_.row_begin(i); e < ybus_.row_end(i); ++e) {
      const std::size_t k = ybus_.col[e];
      const double gik = ybus_.g[e], bik = ybus_.b[e];
      const int ct = lay.theta_pos[k];
      const int cv = lay.vm_pos[k];
      double dp_dt, dp_dv, dq_dt, dq_dv;
      if (k == i) {
        dp_dt = -q[i] - bik * vi * vi;
        dp_dv = p[i] / vi + gik * vi;
        dq_dt = p[i] - gik * vi * vi;
        dq_dv = q[i] / vi - bik * vi;
      } else {
        const double th = s.va[i] - s.va[k];
        const double c = std::cos(th), sn = std::sin(th);
        const double a = gik * c + bik * sn;
        const double d = gik * sn - bik * c;
        dp_dt = vi * s.vm[k] * d;
        dq_dt = -vi * s.vm[k] * a;
        dp_dv = vi * a;
        dq_dv = vi * d;
      }
      if (rp >= 0) {
        if (ct >= 0) trip.emplace_back(rp, ct, dp_dt);
        if (cv >= 0) trip.emplace_back(rp, cv, dp_dv);
      }
      if (rq >= 0) {
        if (ct >= 0) trip.emplace_back(rq, ct, dq_dt);
        if (cv >= 0) trip.emplace_back(rq, cv, dq_dv);
      }
    }
  }
  const auto n = static_cast<Eigen::Index>(lay.size());
  Eigen::SparseMatrix<double> jac(n, n);
  jac.setFromTriplets(trip.begin(), trip.end());
  return jac;
}

StateVector PowerFlowModel::flat_start() const {
  StateVector s;
  s.vm = vm_fixed_;
  s.va.assign(net_.n_bus(), slack_angle_);
  for (std::size_t i : layout_.vm_buses) s.vm[i] = 1.0;
  return s;
}

StateVector PowerFlowModel::nominal_start() const {
  StateVector s;
  s.vm = vm_fixed_;
  s.va.resize(net_.n_bus());
  for (std::size_t i = 0; i < net_.n_bus(); ++i) s.va[i] = net_.buses[i].va0 * std::numbers::pi / 180.0;
  for (std::size_t i : layout_.vm_buses) s.vm[i] = net_.buses[i].vm0;
  return s;
}

Eigen::VectorXd PowerFlowModel::pack(const StateVector& s) const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(layout_.size()));
  for (std::size_t j = 0; j < layout_.theta_buses.size(); ++j) y[static_cast<Eigen::Index>(j)] = s.va[layout_.theta_buses[j]];
  for (std::size_t j = 0; j < layout_.vm_buses.size(); ++j)
    y[static_cast<Eigen::Index>(layout_.n_theta() + j)] = s.vm[layout_.vm_buses[j]];
  return y;
}

void PowerFlowModel::unpack(const Eigen::VectorXd& y, StateVector& s) const {
  for (std::size_t j = 0; j < layout_.theta_buses.size(); ++j) s.va[layout_.theta_buses[j]] = y[static_cast<Eigen::Index>(j)];
  for (std::size_t j = 0; j < layout_.vm_buses.size(); ++j)
    s.vm[layout_.vm_buses[j]] = y[static_cast<Eigen::Index>(layout_.n_theta() + j)];
}

bool PowerFlowModel::use_dense(const PowerFlowOptions& opts) const {
  switch (opts.linear_solver) {
    case LinearSolverKind::Dense:
      return true;
    case LinearSolverKind::Sparse:
      return false;
    case LinearSolverKind::Auto:
      break;
  }
  return net_.n_bus() <= opts.dense_bus_limit;
}

PowerFlowSolution solve_power_flow(const PowerFlowModel& model, const InjectionVector& inj, const StateVector& start,
                                   const PowerFlowOptions& opts) {
  if (inj.size() != static_cast<Eigen::Index>(model.n_state()))
    throw ValidationError("injection vector has wrong dimension");
  PowerFlowSolution sol;
  sol.state = start;
  for (double v : start.vm)
    if (!(v > 0.0)) throw ValidationError("start voltage magnitudes must be positive");

  const bool dense = model.use_dense(opts);
  JacobianFactor lu;
  Eigen::VectorXd y = model.pack(sol.state);

  for (int it = 0;; ++it) {
    const Eigen::VectorXd mis = model.reduced_injections(sol.state) - inj;
    const double norm = mis.size() ? mis.cwiseAbs().maxCoeff() : 0.0;
    sol.max_mismatch = norm;
    sol.iterations = it;
    if (!std::isfinite(norm)) return sol;
    if (norm <= opts.tol) {
      sol.converged = true;
      return sol;
    }
    if (it >= opts.max_iter) return sol;
    try {
      lu.factor(model.jacobian(sol.state), dense);
    } catch (const NumericalError&) {
      throw NumericalError("singular Jacobian at iteration " + std::to_string(it + 1));
    }
    y -= lu.solve(mis);
    model.unpack(y, sol.state);
  }
}

}  // namespace cpla
