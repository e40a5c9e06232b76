#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "cpla/acpf.hpp"
#include "cpla/matrix.hpp"

namespace cpla {

/// Second derivatives of one power flow equation, stored as a dense block
/// over the state variables it touches (the bus and its neighbours).
struct LocalHessian {
  std::vector<int> vars;  // ascending indices into y
  Eigen::MatrixXd h;      // vars.size() square, symmetric
};

/// One LocalHessian per equation, in x order.
struct HessianStack {
  std::size_t n_state = 0;
  std::vector<LocalHessian> eq;

  Eigen::MatrixXd dense(std::size_t m) const;
};

HessianStack hessians(const PowerFlowModel& model, const StateVector& s);

enum class Quantity { VoltageMagnitude, VoltageAngle };

struct SensitivityTarget {
  int bus_id = 0;
  Quantity quantity = Quantity::VoltageMagnitude;

  bool operator==(const SensitivityTarget&) const = default;
};

struct SensitivityMatrix {
  SensitivityTarget target;
  Eigen::MatrixXd lambda;     // n_inj square, symmetric
  Eigen::VectorXd gradient;   // d target / d x at the base point
  double value = 0.0;         // target at the base point
  InjectionVector base_point;
  StateVector base_state;
};

/// Factors J once at a converged base point and computes Λ for any number
/// of targets. compute() is const and thread-safe. Keeps a reference to
/// the model, which must outlive the engine.
class SensitivityEngine {
 public:
  SensitivityEngine(const PowerFlowModel& model, const PowerFlowSolution& base, const PowerFlowOptions& opts = {});

  SensitivityMatrix compute(const SensitivityTarget& target) const;
  std::vector<SensitivityMatrix> compute_all(const std::vector<SensitivityTarget>& targets, unsigned workers = 0) const;

  const Eigen::MatrixXd& first_order() const { return s_; }
  const HessianStack& hessian_stack() const { return hess_; }

 private:
  const PowerFlowModel& model_;
  StateVector state_;
  InjectionVector x0_;
  Eigen::MatrixXd s_;  // J^-1
  HessianStack hess_;
};

SensitivityMatrix second_order_sensitivity(const PowerFlowModel& model, const PowerFlowSolution& base,
                                           const SensitivityTarget& target, const PowerFlowOptions& opts = {});

struct TaylorModel {
  double f0 = 0.0;
  Eigen::VectorXd grad;
  std::shared_ptr<const SensitivityMatrix> lambda;
  InjectionVector x0;
};

TaylorModel make_taylor(std::shared_ptr<const SensitivityMatrix> sens);
double taylor_eval(const TaylorModel& model, const InjectionVector& x);

enum class Curvature { Concave = -1, Flat = 0, Convex = 1 };

struct DirectionBasis {
  Eigen::MatrixXd vectors;  // n_inj x N, orthonormal columns
  Eigen::VectorXd values;   // |values| non-increasing
  std::vector<Curvature> signs;

  std::size_t size() const { return static_cast<std::size_t>(vectors.cols()); }
  std::size_t dim() const { return static_cast<std::size_t>(vectors.rows()); }
};

/// Either an explicit count or an energy threshold: the smallest N whose
/// leading |eigenvalues| hold at least `tau` of the total.
struct DirectionSelection {
  std::optional<std::size_t> count;
  double tau = 0.9;
};

DirectionBasis dominant_directions(const Eigen::MatrixXd& lambda, const DirectionSelection& sel);
inline DirectionBasis dominant_directions(const SensitivityMatrix& sens, const DirectionSelection& sel) {
  return dominant_directions(sens.lambda, sel);
}

/// T = W U, one row of rotated coordinates per row of W.
RowMatrix rotate(const RowMatrix& w, const DirectionBasis& basis);
Eigen::VectorXd rotate(const Eigen::VectorXd& w, const DirectionBasis& basis);

std::string to_string(Quantity q);
Quantity quantity_from_string(const std::string& s);

nlohmann::json sensitivity_to_json(const SensitivityMatrix& sens, const DirectionBasis& basis);
void write_sensitivity_json(const std::string& path, const SensitivityMatrix& sens, const DirectionBasis& basis);
/// Reads the basis and target back from a sensitivity file.
DirectionBasis read_basis_json(const std::string& path, SensitivityTarget* target = nullptr);
DirectionBasis basis_from_json(const nlohmann::json& j);
nlohmann::json basis_to_json(const DirectionBasis& basis);

}  // namespace cpla
