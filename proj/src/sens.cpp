#include "cpla/sens.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

#include "cpla/error.hpp"
#include "cpla/io.hpp"
#include "cpla/parallel.hpp"
#include "cpla/simd/kernels.hpp"

namespace cpla {

Eigen::MatrixXd HessianStack::dense(std::size_t m) const {
  const auto n = static_cast<Eigen::Index>(n_state);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  const LocalHessian& lh = eq.at(m);
  for (std::size_t a = 0; a < lh.vars.size(); ++a)
    for (std::size_t b = 0; b < lh.vars.size(); ++b)
      out(lh.vars[a], lh.vars[b]) = lh.h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  return out;
}

namespace {

// Accumulates d^2 g / dy_p dy_q into a local block; p or q < 0 means the
// variable is fixed and the entry is dropped.
struct LocalBuilder {
  const std::vector<int>& vars;
  Eigen::MatrixXd& h;

  Eigen::Index local(int global) const {
    auto it = std::lower_bound(vars.begin(), vars.end(), global);
    return static_cast<Eigen::Index>(it - vars.begin());
  }
  void add(int p, int q, double v) {
    if (p < 0 || q < 0) return;
    const Eigen::Index a = local(p), b = local(q);
    h(a, b) += v;
    if (a != b) h(b, a) += v;
  }
};

}  // namespace

HessianStack hessians(const PowerFlowModel& model, const StateVector& s) {
  const StateLayout& lay = model.layout();
  const AdmittanceMatrix& y = model.admittance();
  HessianStack out;
  out.n_state = lay.size();
  out.eq.resize(lay.size());

  for (std::size_t i = 0; i < y.n; ++i) {
    const int rp = lay.theta_pos[i];
    const int rq = lay.vm_pos[i];
    if (rp < 0 && rq < 0) continue;

    std::vector<int> vars;
    for (std::size_t e = y.row_begin(i); e < y.row_end(i); ++e) {
      const std::size_t k = y.col[e];
      if (lay.theta_pos[k] >= 0) vars.push_back(lay.theta_pos[k]);
      if (lay.vm_pos[k] >= 0) vars.push_back(lay.vm_pos[k]);
    }
    std::sort(vars.begin(), vars.end());
    vars.erase(std::unique(vars.begin(), vars.end()), vars.end());
    const auto nv = static_cast<Eigen::Index>(vars.size());
    Eigen::MatrixXd hp = Eigen::MatrixXd::Zero(nv, nv);
    Eigen::MatrixXd hq = Eigen::MatrixXd::Zero(nv, nv);
    LocalBuilder bp{vars, hp}, bq{vars, hq};

    const double vi = s.vm[i];
    const int ti = lay.theta_pos[i], ui = lay.vm_pos[i];
    for (std::size_t e = y.row_begin(i); e < y.row_end(i); ++e) {
      const std::size_t k = y.col[e];
      const double g = y.g[e], b = y.b[e];
      if (k == i) {
        bp.add(ui, ui, 2.0 * g);
        bq.add(ui, ui, -2.0 * b);
        continue;
      }
      const double vk = s.vm[k];
      const double th = s.va[i] - s.va[k];
      const double c = std::cos(th), sn = std::sin(th);
      const double a = g * c + b * sn;   // P term: vi vk a(th)
      const double d = g * sn - b * c;   // Q term: vi vk d(th); a' = -d, d' = a
      const int tk = lay.theta_pos[k], uk = lay.vm_pos[k];

      bp.add(ti, ti, -vi * vk * a);
      bp.add(tk, tk, -vi * vk * a);
      bp.add(ti, tk, vi * vk * a);
      bp.add(ti, ui, -vk * d);
      bp.add(ti, uk, -vi * d);
      bp.add(tk, ui, vk * d);
      bp.add(tk, uk, vi * d);
      bp.add(ui, uk, a);

      bq.add(ti, ti, -vi * vk * d);
      bq.add(tk, tk, -vi * vk * d);
      bq.add(ti, tk, vi * vk * d);
      bq.add(ti, ui, vk * a);
      bq.add(ti, uk, vi * a);
      bq.add(tk, ui, -vk * a);
      bq.add(tk, uk, -vi * a);
      bq.add(ui, uk, d);
    }
    if (rp >= 0) out.eq[static_cast<std::size_t>(rp)] = LocalHessian{vars, std::move(hp)};
    if (rq >= 0) out.eq[static_cast<std::size_t>(rq)] = LocalHessian{vars, std::move(hq)};
  }
  return out;
}

SensitivityEngine::SensitivityEngine(const PowerFlowModel& model, const PowerFlowSolution& base,
                                     const PowerFlowOptions& opts)
    : model_(model), state_(base.state) {
  if (!base.converged) throw ValidationError("sensitivity base point is not a converged power flow solution");
  x0_ = model.reduced_injections(state_);
  JacobianFactor lu;
  lu.factor(model.jacobian(state_), model.use_dense(opts));
  const auto n = static_cast<Eigen::Index>(model.n_state());
  s_ = lu.solve(Eigen::MatrixXd(Eigen::MatrixXd::Identity(n, n)));
  hess_ = hessians(model, state_);
}

SensitivityMatrix SensitivityEngine::compute(const SensitivityTarget& target) const {
  const auto& net = model_.network();
  const BusIndexMap index = make_bus_index(net);
  auto it = index.find(target.bus_id);
  if (it == index.end()) throw ValidationError("unknown target bus " + std::to_string(target.bus_id));
  const std::size_t bus = it->second;
  const StateLayout& lay = model_.layout();
  const auto n = static_cast<Eigen::Index>(lay.size());

  SensitivityMatrix out;
  out.target = target;
  out.base_point = x0_;
  out.base_state = state_;
  const int row = target.quantity == Quantity::VoltageMagnitude ? lay.vm_pos[bus] : lay.theta_pos[bus];
  out.value = target.quantity == Quantity::VoltageMagnitude ? state_.vm[bus] : state_.va[bus];
  if (row < 0) {
    out.gradient = Eigen::VectorXd::Zero(n);
    out.lambda = Eigen::MatrixXd::Zero(n, n);
    return out;
  }

  // Implicit differentiation of g(y(x)) = x twice:
  //   d2y_k/dx2 = -sum_m S(k,m) S^T H_m S, with S = J^-1.
  // Weighting the local Hessians first leaves a single sparse-dense product.
  const Eigen::VectorXd r = s_.row(row).transpose();
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t m = 0; m < hess_.eq.size(); ++m) {
    const double w = r[static_cast<Eigen::Index>(m)];
    if (w == 0.0) continue;
    const LocalHessian& lh = hess_.eq[m];
    for (std::size_t a = 0; a < lh.vars.size(); ++a)
      for (std::size_t b = 0; b < lh.vars.size(); ++b) {
        const double v = lh.h(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
        if (v != 0.0) trip.emplace_back(lh.vars[a], lh.vars[b], w * v);
      }
  }
  Eigen::SparseMatrix<double> hbar(n, n);
  hbar.setFromTriplets(trip.begin(), trip.end());
  const Eigen::MatrixXd z = hbar * s_;
  Eigen::MatrixXd lambda = -(s_.transpose() * z);
  out.lambda = 0.5 * (lambda + lambda.transpose());
  out.gradient = r;
  return out;
}

std::vector<SensitivityMatrix> SensitivityEngine::compute_all(const std::vector<SensitivityTarget>& targets,
                                                              unsigned workers) const {
  std::vector<SensitivityMatrix> out(targets.size());
  parallel_for(targets.size(), workers, [&](std::size_t i) { out[i] = compute(targets[i]); });
  return out;
}

SensitivityMatrix second_order_sensitivity(const PowerFlowModel& model, const PowerFlowSolution& base,
                                           const SensitivityTarget& target, const PowerFlowOptions& opts) {
  return SensitivityEngine(model, base, opts).compute(target);
}

TaylorModel make_taylor(std::shared_ptr<const SensitivityMatrix> sens) {
  TaylorModel t;
  t.f0 = sens->value;
  t.grad = sens->gradient;
  t.x0 = sens->base_point;
  t.lambda = std::move(sens);
  return t;
}

double taylor_eval(const TaylorModel& model, const InjectionVector& x) {
  if (x.size() != model.x0.size()) throw ValidationError("taylor_eval: injection vector has the wrong length");
  const Eigen::VectorXd dx = x - model.x0;
  return model.f0 + model.grad.dot(dx) + 0.5 * dx.dot(model.lambda->lambda * dx);
}

DirectionBasis dominant_directions(const Eigen::MatrixXd& lambda, const DirectionSelection& sel) {
  if (lambda.rows() != lambda.cols()) throw ValidationError("sensitivity matrix is not square");
  const auto n = static_cast<std::size_t>(lambda.rows());
  if (n == 0) throw ValidationError("sensitivity matrix is empty");
  if (sel.count) {
    if (*sel.count == 0) throw ValidationError("direction count must be at least 1");
    if (*sel.count > n)
      throw ValidationError("requested " + std::to_string(*sel.count) + " directions but there are only " +
                            std::to_string(n) + " injections");
  } else if (!(sel.tau > 0.0 && sel.tau <= 1.0)) {
    throw ValidationError("energy threshold must lie in (0, 1]");
  }

  const Eigen::MatrixXd sym = 0.5 * (lambda + lambda.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition did not converge");
  const Eigen::VectorXd& ev = eig.eigenvalues();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(ev[Eigen::Index(a)]) > std::abs(ev[Eigen::Index(b)]); });

  std::size_t count = 0;
  if (sel.count) {
    count = *sel.count;
  } else {
    const double total = ev.cwiseAbs().sum();
    double acc = 0.0;
    count = n;
    for (std::size_t i = 0; i < n; ++i) {
      acc += std::abs(ev[Eigen::Index(order[i])]);
      if (acc >= sel.tau * total * (1.0 - 1e-12)) {
        count = i + 1;
        break;
      }
    }
  }

  DirectionBasis out;
  out.vectors.resize(Eigen::Index(n), Eigen::Index(count));
  out.values.resize(Eigen::Index(count));
  for (std::size_t j = 0; j < count; ++j) {
    Eigen::VectorXd v = eig.eigenvectors().col(Eigen::Index(order[j]));
    const double cut = 1e-9 * v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::abs(v[i]) > cut) {
        if (v[i] < 0) v = -v;
        break;
      }
    }
    const double val = ev[Eigen::Index(order[j])];
    out.vectors.col(Eigen::Index(j)) = v;
    out.values[Eigen::Index(j)] = val;
    out.signs.push_back(val > 0 ? Curvature::Convex : (val < 0 ? Curvature::Concave : Curvature::Flat));
  }
  return out;
}

RowMatrix rotate(const RowMatrix& w, const DirectionBasis& basis) {
  if (static_cast<std::size_t>(w.cols()) != basis.dim())
    throw ValidationError("rotate: injection matrix has " + std::to_string(w.cols()) + " columns, basis expects " +
                          std::to_string(basis.dim()));
  const auto& k = simd::active_kernels();
  const std::size_t n = basis.dim();
  RowMatrix t(w.rows(), Eigen::Index(basis.size()));
  for (Eigen::Index s = 0; s < w.rows(); ++s)
    for (Eigen::Index j = 0; j < t.cols(); ++j) t(s, j) = k.dot(w.row(s).data(), basis.vectors.col(j).data(), n);
  return t;
}

Eigen::VectorXd rotate(const Eigen::VectorXd& w, const DirectionBasis& basis) {
  RowMatrix row = w.transpose();
  return rotate(row, basis).row(0).transpose();
}

std::string to_string(Quantity q) { return q == Quantity::VoltageMagnitude ? "vm" : "va"; }

Quantity quantity_from_string(const std::string& s) {
  if (s == "vm") return Quantity::VoltageMagnitude;
  if (s == "va") return Quantity::VoltageAngle;
  throw ValidationError("unknown quantity '" + s + "' (expected vm or va)");
}

nlohmann::json basis_to_json(const DirectionBasis& basis) {
  nlohmann::json vectors = nlohmann::json::array();
  for (Eigen::Index j = 0; j < basis.vectors.cols(); ++j) {
    std::vector<double> col(basis.vectors.col(j).data(), basis.vectors.col(j).data() + basis.vectors.rows());
    vectors.push_back(col);
  }
  std::vector<double> values(basis.values.data(), basis.values.data() + basis.values.size());
  return {{"values", values}, {"vectors", vectors}};
}

DirectionBasis basis_from_json(const nlohmann::json& j) {
  try {
    const auto values = j.at("values").get<std::vector<double>>();
    const auto vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
    if (values.size() != vectors.size()) throw ValidationError("basis: values and vectors differ in length");
    if (vectors.empty()) throw ValidationError("basis: no directions");
    const std::size_t n = vectors.front().size();
    DirectionBasis out;
    out.vectors.resize(Eigen::Index(n), Eigen::Index(vectors.size()));
    out.values.resize(Eigen::Index(values.size()));
    for (std::size_t k = 0; k < vectors.size(); ++k) {
      if (vectors[k].size() != n) throw ValidationError("basis: vectors have different lengths");
      for (std::size_t i = 0; i < n; ++i) out.vectors(Eigen::Index(i), Eigen::Index(k)) = vectors[k][i];
      out.values[Eigen::Index(k)] = values[k];
      out.signs.push_back(values[k] > 0 ? Curvature::Convex : (values[k] < 0 ? Curvature::Concave : Curvature::Flat));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("basis: ") + e.what());
  }
}

nlohmann::json sensitivity_to_json(const SensitivityMatrix& sens, const DirectionBasis& basis) {
  const nlohmann::json b = basis_to_json(basis);
  std::vector<double> x0(sens.base_point.data(), sens.base_point.data() + sens.base_point.size());
  return {{"target", sens.target.bus_id},
          {"quantity", to_string(sens.target.quantity)},
          {"value", sens.value},
          {"base_point", x0},
          {"eigenvalues", b["values"]},
          {"vectors", b["vectors"]}};
}

void write_sensitivity_json(const std::string& path, const SensitivityMatrix& sens, const DirectionBasis& basis) {
  write_json_file(path, sensitivity_to_json(sens, basis));
}

DirectionBasis read_basis_json(const std::string& path, SensitivityTarget* target) {
  const nlohmann::json j = read_json_file(path);
  try {
    if (target) {
      target->bus_id = j.at("target").get<int>();
      target->quantity = quantity_from_string(j.value("quantity", std::string("vm")));
    }
    return basis_from_json({{"values", j.at("eigenvalues")}, {"vectors", j.at("vectors")}});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("sensitivity file '" + path + "': " + e.what());
  }
}

}  // namespace cpla
