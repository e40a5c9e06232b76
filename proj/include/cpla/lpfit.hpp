#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json_fwd.hpp>

#include "cpla/lp.hpp"
#include "cpla/matrix.hpp"
#include "cpla/sampler.hpp"
#include "cpla/segments.hpp"
#include "cpla/sens.hpp"

namespace cpla {

/// Over: the model never falls below the data. Under: never above.
enum class FitMode { Over, Under };

std::string to_string(FitMode m);
FitMode fit_mode_from_string(const std::string& s);

struct TrainingInfo {
  std::string case_hash;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  std::size_t m = 0;  // breakpoints per direction
  std::size_t n = 0;  // directions
  bool regularized = false;
  double loss = 0.0;  // mean |gamma - prediction| on the training set
  std::size_t lp_variables = 0;
  std::size_t lp_iterations = 0;
  std::string config_hash;
};

struct ClaModel {
  FitMode mode = FitMode::Under;
  int target = 0;
  double a0 = 0.0;
  Eigen::VectorXd a1;
  TrainingInfo training;
};

struct CplaModel {
  FitMode mode = FitMode::Under;
  int target = 0;
  double a0 = 0.0;
  Eigen::VectorXd a1;
  DirectionBasis basis;
  Breakpoints breakpoints;
  std::vector<std::vector<double>> slopes;  // slopes[k][j], j = 0..M
  double base_intercept = 0.0;
  TrainingInfo training;
};

using Model = std::variant<ClaModel, CplaModel>;

struct FitOptions {
  const LpSolver* solver = nullptr;  // default RevisedSimplex
  double eps = 0.01;                 // for the sample sufficiency warning
};

/// Conservative linear fit of gamma over the rows of w.
ClaModel fit_cla(const RowMatrix& w, const Eigen::VectorXd& gamma, FitMode mode, const FitOptions& opts = {});
ClaModel fit_cla(const SampleSet& samples, int target, FitMode mode, const FitOptions& opts = {});

/// Number of LP decision variables for a CPLA fit: a0, a1, the base
/// intercept and one slope per (direction, segment).
std::size_t cpla_variable_count(std::size_t n_inj, std::size_t n_dirs, std::size_t m);

/// The fitting LP itself; exposed for inspection.
LinearProgram build_cpla_lp(const RowMatrix& w, const Eigen::VectorXd& gamma, const DirectionBasis& basis,
                            const Breakpoints& bp, FitMode mode, bool regularize);

CplaModel fit_cpla(const RowMatrix& w, const Eigen::VectorXd& gamma, const DirectionBasis& basis,
                   const Breakpoints& bp, FitMode mode, bool regularize, const FitOptions& opts = {});
/// Breakpoints from make_breakpoints(rotate(w), m).
CplaModel fit_cpla(const RowMatrix& w, const Eigen::VectorXd& gamma, const DirectionBasis& basis, std::size_t m,
                   FitMode mode, bool regularize, const FitOptions& opts = {});
CplaModel fit_cpla(const SampleSet& samples, int target, const DirectionBasis& basis, std::size_t m, FitMode mode,
                   bool regularize, const FitOptions& opts = {});

/// Intercept of region b, accumulated from the base intercept across the
/// breakpoints below b in every direction.
double reconstruct_intercept(const CplaModel& model, const SegmentIndex& b);

double predict(const ClaModel& model, const Eigen::VectorXd& w);
double predict(const CplaModel& model, const Eigen::VectorXd& w);
/// Evaluates the affine piece of region b regardless of where w lies.
double predict_in_region(const CplaModel& model, const Eigen::VectorXd& w, const SegmentIndex& b);
Eigen::VectorXd predict(const ClaModel& model, const RowMatrix& w);
Eigen::VectorXd predict(const CplaModel& model, const RowMatrix& w);
Eigen::VectorXd predict(const Model& model, const RowMatrix& w);

int model_target(const Model& model);
FitMode model_mode(const Model& model);
const TrainingInfo& model_training(const Model& model);

struct EvalReport {
  std::size_t samples = 0;
  double mean_abs_error = 0.0;
  double max_error = 0.0;
  std::size_t violations = 0;
  std::optional<double> baseline_mean_abs_error;
  std::optional<double> error_reduction_pct;
  double seconds = 0.0;  // wall time of the evaluation; not serialized
};

EvalReport evaluate(const Model& model, const RowMatrix& w, const Eigen::VectorXd& gamma,
                    const Model* baseline = nullptr);
EvalReport evaluate(const Model& model, const SampleSet& samples, const Model* baseline = nullptr);

/// 100 * (1 - model / baseline) on mean absolute error.
double error_reduction(double model_error, double baseline_error);

nlohmann::json model_to_json(const Model& model);
Model model_from_json(const nlohmann::json& j);
void write_model(const std::string& path, const Model& model);
Model read_model(const std::string& path);
nlohmann::json report_to_json(const EvalReport& r);

}  // namespace cpla
