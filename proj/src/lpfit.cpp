#include "cpla/lpfit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cpla/error.hpp"
#include "cpla/io.hpp"
#include "cpla/simd/kernels.hpp"
#include "cpla/version.hpp"

namespace cpla {

std::string to_string(FitMode m) { return m == FitMode::Over ? "over" : "under"; }

FitMode fit_mode_from_string(const std::string& s) {
  if (s == "over") return FitMode::Over;
  if (s == "under") return FitMode::Under;
  throw ValidationError("unknown fit mode '" + s + "' (expected over or under)");
}

namespace {

void check_training_data(const RowMatrix& w, const Eigen::VectorXd& gamma) {
  if (w.rows() == 0) throw ValidationError("no training samples");
  if (w.rows() != gamma.size()) throw ValidationError("sample matrix and target values differ in length");
  if (!w.allFinite() || !gamma.allFinite()) throw ValidationError("training data contains non-finite values");
}

// Rows are features f_s of h_s = f_s z. Under: f_s z <= gamma_s and
// maximise the mean of h; Over: the mirror image. The residual sign is
// fixed by the constraint, so the mean absolute error is linear in z.
LinearProgram conservative_lp(RowMatrix features, const Eigen::VectorXd& gamma, FitMode mode) {
  LinearProgram lp;
  const Eigen::VectorXd mean = features.colwise().mean().transpose();
  if (mode == FitMode::Under) {
    lp.c = -mean;
    lp.u = gamma;
    lp.a = std::move(features);
  } else {
    lp.c = mean;
    lp.u = -gamma;
    lp.a = -std::move(features);
  }
  lp.e.resize(0, lp.c.size());
  lp.v.resize(0);
  return lp;
}

LpResult solve_fit_lp(const LinearProgram& lp, const FitOptions& opts) {
  const LpResult r = solve_lp(lp, opts.solver);
  if (r.status != LpStatus::Optimal) throw NumericalError("fitting LP ended " + to_string(r.status));
  return r;
}

// Moves a0 until every training residual has the right sign, absorbing
// the LP's feasibility tolerance; returns the final loss.
template <typename M>
double make_conservative(M& model, const RowMatrix& w, const Eigen::VectorXd& gamma) {
  const double dir = model.mode == FitMode::Under ? 1.0 : -1.0;
  Eigen::VectorXd pred = predict(model, w);
  for (int pass = 0; pass < 64; ++pass) {
    const double worst = (dir * (pred - gamma)).maxCoeff();
    if (worst <= 0) break;
    // rounding in a0 - worst can leave the last ulp on the wrong side
    const double shifted = model.a0 - dir * worst;
    model.a0 = pass == 0 ? shifted : std::nextafter(shifted, -dir * HUGE_VAL);
    pred = predict(model, w);
  }
  return (pred - gamma).cwiseAbs().mean();
}

// Coefficient of slope (k, j) in the reduced form for a sample with
// rotated coordinate t in segment b of direction k.
double slope_coefficient(std::size_t j, int b, double t, const std::vector<double>& pts) {
  const auto bj = static_cast<std::size_t>(b);
  double c = 0.0;
  if (j == bj) c += t;
  if (j < bj) c += pts[j];
  if (j >= 1 && j <= bj) c -= pts[j - 1];
  return c;
}

}  // namespace

ClaModel fit_cla(const RowMatrix& w, const Eigen::VectorXd& gamma, FitMode mode, const FitOptions& opts) {
  check_training_data(w, gamma);
  const auto s = w.rows(), n = w.cols();
  if (s < n + 1) spdlog::warn("CLA fit with {} samples for {} coefficients", s, n + 1);
  RowMatrix f(s, n + 1);
  f.col(0).setOnes();
  f.rightCols(n) = w;
  const LinearProgram lp = conservative_lp(std::move(f), gamma, mode);
  const LpResult r = solve_fit_lp(lp, opts);

  ClaModel m;
  m.mode = mode;
  m.a0 = r.z[0];
  m.a1 = r.z.tail(n);
  m.training.samples = static_cast<std::size_t>(s);
  m.training.lp_variables = static_cast<std::size_t>(n + 1);
  m.training.lp_iterations = r.iterations;
  m.training.loss = make_conservative(m, w, gamma);
  return m;
}

ClaModel fit_cla(const SampleSet& samples, int target, FitMode mode, const FitOptions& opts) {
  ClaModel m = fit_cla(samples.injections, samples.target_values(target), mode, opts);
  m.target = target;
  m.training.case_hash = samples.case_hash;
  m.training.seed = samples.seed;
  return m;
}

std::size_t cpla_variable_count(std::size_t n_inj, std::size_t n_dirs, std::size_t m) {
  return n_inj + 2 + n_dirs * (m + 1);
}

LinearProgram build_cpla_lp(const RowMatrix& w, const Eigen::VectorXd& gamma, const DirectionBasis& basis,
                            const Breakpoints& bp, FitMode mode, bool regularize) {
  check_training_data(w, gamma);
  if (basis.dim() != static_cast<std::size_t>(w.cols()))
    throw ValidationError("basis dimension does not match the injection vectors");
  if (bp.n_dirs() != basis.size()) throw ValidationError("breakpoints and basis disagree on the number of directions");
  const std::size_t nd = bp.n_dirs();
  const std::size_t m = nd ? bp.points[0].size() : 0;
  for (const auto& p : bp.points)
    if (p.size() != m) throw ValidationError("every direction needs the same number of breakpoints");

  const auto s = w.rows();
  const auto n = static_cast<std::size_t>(w.cols());
  const std::size_t nvar = cpla_variable_count(n, nd, m);
  const RowMatrix t = rotate(w, basis);
  RowMatrix f = RowMatrix::Zero(s, Eigen::Index(nvar));
  for (Eigen::Index r = 0; r < s; ++r) {
    f(r, 0) = 1.0;
    f.row(r).segment(1, Eigen::Index(n)) = w.row(r);
    f(r, Eigen::Index(n + 1)) = 1.0;
    const SegmentIndex b = assign_segments(t.row(r).data(), bp);
    for (std::size_t k = 0; k < nd; ++k) {
      const std::size_t base = n + 2 + k * (m + 1);
      for (std::size_t j = 0; j <= std::min<std::size_t>(m, static_cast<std::size_t>(b[k])); ++j)
        f(r, Eigen::Index(base + j)) = slope_coefficient(j, b[k], t(r, Eigen::Index(k)), bp.points[k]);
    }
  }
  LinearProgram lp = conservative_lp(std::move(f), gamma, mode);

  if (regularize) {
    std::vector<std::pair<std::size_t, std::size_t>> le;  // slope a <= slope b
    for (std::size_t k = 0; k < nd; ++k) {
      const std::size_t base = n + 2 + k * (m + 1);
      for (std::size_t j = 0; j < m; ++j) {
        if (basis.signs[k] == Curvature::Convex) le.emplace_back(base + j, base + j + 1);
        else if (basis.signs[k] == Curvature::Concave) le.emplace_back(base + j + 1, base + j);
      }
    }
    if (!le.empty()) {
      const Eigen::Index m0 = lp.a.rows();
      lp.a.conservativeResize(m0 + Eigen::Index(le.size()), Eigen::NoChange);
      lp.u.conservativeResize(m0 + Eigen::Index(le.size()));
      lp.a.bottomRows(Eigen::Index(le.size())).setZero();
      for (std::size_t i = 0; i < le.size(); ++i) {
        lp.a(m0 + Eigen::Index(i), Eigen::Index(le[i].first)) = 1.0;
        lp.a(m0 + Eigen::Index(i), Eigen::Index(le[i].second)) = -1.0;
        lp.u[m0 + Eigen::Index(i)] = 0.0;
      }
    }
  }
  return lp;
}

CplaModel fit_cpla(const RowMatrix& w, const Eigen::VectorXd& gamma, const DirectionBasis& basis,
                   const Breakpoints& bp, FitMode mode, bool regularize, const FitOptions& opts) {
  const LinearProgram lp = build_cpla_lp(w, gamma, basis, bp, mode, regularize);
  const std::size_t nd = bp.n_dirs();
  const std::size_t m = nd ? bp.points[0].size() : 0;
  const std::size_t n = basis.dim();

  if (!regularize && nd > 0) {
    const RegionCensus census = region_census(rotate(w, basis), bp);
    if (census.empties > 0) {
      std::string list;
      const auto empty = census.empty_regions(bp);
      for (std::size_t i = 0; i < empty.size() && i < 20; ++i) {
        list += i ? " (" : "(";
        for (std::size_t k = 0; k < empty[i].size(); ++k) list += (k ? "," : "") + std::to_string(empty[i][k]);
        list += ")";
      }
      if (empty.size() > 20) list += " ...";
      throw ValidationError(std::to_string(census.empties) + " of " + std::to_string(bp.n_regions()) +
                            " regions have no samples: " + list + "; enable regularization or add samples");
    }
    const std::size_t need = sample_sufficiency(bp.n_regions(), opts.eps);
    if (static_cast<std::size_t>(w.rows()) < need)
      spdlog::warn("{} samples for {} regions; {} are needed for eps = {}", w.rows(), bp.n_regions(), need, opts.eps);
  }

  const LpResult r = solve_fit_lp(lp, opts);
  CplaModel model;
  model.mode = mode;
  model.a0 = r.z[0];
  model.a1 = r.z.segment(1, Eigen::Index(n));
  model.base_intercept = r.z[Eigen::Index(n + 1)];
  model.basis = basis;
  model.breakpoints = bp;
  model.slopes.assign(nd, std::vector<double>(m + 1));
  for (std::size_t k = 0; k < nd; ++k)
    for (std::size_t j = 0; j <= m; ++j) model.slopes[k][j] = r.z[Eigen::Index(n + 2 + k * (m + 1) + j)];
  model.training.samples = static_cast<std::size_t>(w.rows());
  model.training.m = m;
  model.training.n = nd;
  model.training.regularized = regularize;
  model.training.lp_variables = static_cast<std::size_t>(lp.c.size());
  model.training.lp_iterations = r.iterations;
  model.training.loss = make_conservative(model, w, gamma);
  return model;
}

CplaModel fit_cpla(const RowMatrix& w, const Eigen::VectorXd& gamma, const DirectionBasis& basis, std::size_t m,
                   FitMode mode, bool regularize, const FitOptions& opts) {
  return fit_cpla(w, gamma, basis, make_breakpoints(rotate(w, basis), m), mode, regularize, opts);
}

CplaModel fit_cpla(const SampleSet& samples, int target, const DirectionBasis& basis, std::size_t m, FitMode mode,
                   bool regularize, const FitOptions& opts) {
  CplaModel model = fit_cpla(samples.injections, samples.target_values(target), basis, m, mode, regularize, opts);
  model.target = target;
  model.training.case_hash = samples.case_hash;
  model.training.seed = samples.seed;
  return model;
}

double reconstruct_intercept(const CplaModel& model, const SegmentIndex& b) {
  double a = model.base_intercept;
  for (std::size_t k = 0; k < model.slopes.size(); ++k) {
    const auto& s = model.slopes[k];
    const auto& p = model.breakpoints.points[k];
    for (int j = 0; j < b[k]; ++j) a += p[std::size_t(j)] * (s[std::size_t(j)] - s[std::size_t(j) + 1]);
  }
  return a;
}

double predict(const ClaModel& model, const Eigen::VectorXd& w) { return model.a0 + model.a1.dot(w); }

double predict_in_region(const CplaModel& model, const Eigen::VectorXd& w, const SegmentIndex& b) {
  const Eigen::VectorXd t = rotate(w, model.basis);
  double y = model.a0 + model.a1.dot(w) + reconstruct_intercept(model, b);
  for (std::size_t k = 0; k < model.slopes.size(); ++k) y += model.slopes[k][std::size_t(b[k])] * t[Eigen::Index(k)];
  return y;
}

double predict(const CplaModel& model, const Eigen::VectorXd& w) {
  const Eigen::VectorXd t = rotate(w, model.basis);
  return predict_in_region(model, w, assign_segments(t, model.breakpoints));
}

Eigen::VectorXd predict(const ClaModel& model, const RowMatrix& w) {
  if (w.cols() != model.a1.size()) throw ValidationError("injection vectors do not match the model");
  Eigen::VectorXd out(w.rows());
  simd::active_kernels().gemv_rows(w.data(), std::size_t(w.rows()), std::size_t(w.cols()), std::size_t(w.cols()),
                                   model.a1.data(), out.data());
  out.array() += model.a0;
  return out;
}

Eigen::VectorXd predict(const CplaModel& model, const RowMatrix& w) {
  if (w.cols() != model.a1.size()) throw ValidationError("injection vectors do not match the model");
  const auto& k = simd::active_kernels();
  Eigen::VectorXd out(w.rows());
  k.gemv_rows(w.data(), std::size_t(w.rows()), std::size_t(w.cols()), std::size_t(w.cols()), model.a1.data(),
              out.data());
  const RowMatrix t = rotate(w, model.basis);
  const std::size_t nd = model.slopes.size();
  // Per-direction intercept increments, so a region's intercept is a sum.
  std::vector<std::vector<double>> step(nd);
  for (std::size_t d = 0; d < nd; ++d) {
    const auto& s = model.slopes[d];
    const auto& p = model.breakpoints.points[d];
    step[d].assign(s.size(), 0.0);
    for (std::size_t j = 1; j < s.size(); ++j) step[d][j] = step[d][j - 1] + p[j - 1] * (s[j - 1] - s[j]);
  }
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    const SegmentIndex b = assign_segments(t.row(r).data(), model.breakpoints);
    double y = model.a0 + out[r] + model.base_intercept;
    for (std::size_t d = 0; d < nd; ++d)
      y += step[d][std::size_t(b[d])] + model.slopes[d][std::size_t(b[d])] * t(r, Eigen::Index(d));
    out[r] = y;
  }
  return out;
}

Eigen::VectorXd predict(const Model& model, const RowMatrix& w) {
  return std::visit([&](const auto& m) { return predict(m, w); }, model);
}

int model_target(const Model& model) {
  return std::visit([](const auto& m) { return m.target; }, model);
}

FitMode model_mode(const Model& model) {
  return std::visit([](const auto& m) { return m.mode; }, model);
}

const TrainingInfo& model_training(const Model& model) {
  return std::visit([](const auto& m) -> const TrainingInfo& { return m.training; }, model);
}

double error_reduction(double model_error, double baseline_error) {
  if (!(baseline_error > 0)) return 0.0;
  return 100.0 * (1.0 - model_error / baseline_error);
}

EvalReport evaluate(const Model& model, const RowMatrix& w, const Eigen::VectorXd& gamma, const Model* baseline) {
  const auto start = std::chrono::steady_clock::now();
  if (w.rows() != gamma.size()) throw ValidationError("sample matrix and target values differ in length");
  EvalReport r;
  r.samples = static_cast<std::size_t>(w.rows());
  const Eigen::VectorXd pred = predict(model, w);
  const Eigen::VectorXd err = gamma - pred;
  if (r.samples) {
    r.mean_abs_error = err.cwiseAbs().mean();
    r.max_error = err.cwiseAbs().maxCoeff();
  }
  const bool under = model_mode(model) == FitMode::Under;
  for (Eigen::Index i = 0; i < err.size(); ++i)
    if ((under && err[i] < -1e-9) || (!under && err[i] > 1e-9)) ++r.violations;
  if (baseline) {
    const Eigen::VectorXd bpred = predict(*baseline, w);
    r.baseline_mean_abs_error = r.samples ? (gamma - bpred).cwiseAbs().mean() : 0.0;
    r.error_reduction_pct = error_reduction(r.mean_abs_error, *r.baseline_mean_abs_error);
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

EvalReport evaluate(const Model& model, const SampleSet& samples, const Model* baseline) {
  const int target = model_target(model);
  if (baseline && model_target(*baseline) != target)
    throw ValidationError("baseline model targets bus " + std::to_string(model_target(*baseline)) + ", model bus " +
                          std::to_string(target));
  return evaluate(model, samples.injections, samples.target_values(target), baseline);
}

namespace {

using nlohmann::json;

std::vector<double> to_std(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), Eigen::Index(v.size()));
}

json training_json(const TrainingInfo& t) {
  return {{"case_hash", t.case_hash}, {"S", t.samples},      {"seed", t.seed},
          {"M", t.m},                 {"N", t.n},            {"regularized", t.regularized},
          {"loss", t.loss},           {"lp_variables", t.lp_variables}, {"config_hash", t.config_hash}};
}

TrainingInfo training_from_json(const json& j) {
  TrainingInfo t;
  t.case_hash = j.value("case_hash", std::string());
  t.samples = j.value("S", std::size_t{0});
  t.seed = j.value("seed", std::uint64_t{0});
  t.m = j.value("M", std::size_t{0});
  t.n = j.value("N", std::size_t{0});
  t.regularized = j.value("regularized", false);
  t.loss = j.value("loss", 0.0);
  t.lp_variables = j.value("lp_variables", std::size_t{0});
  t.config_hash = j.value("config_hash", std::string());
  return t;
}

}  // namespace

json model_to_json(const Model& model) {
  if (const auto* cla = std::get_if<ClaModel>(&model)) {
    return {{"type", "cla"},       {"version", kVersion},  {"mode", to_string(cla->mode)},
            {"target", cla->target}, {"a0", cla->a0},      {"a1", to_std(cla->a1)},
            {"training", training_json(cla->training)}};
  }
  const auto& m = std::get<CplaModel>(model);
  json range = json::array();
  for (std::size_t k = 0; k < m.breakpoints.n_dirs(); ++k) range.push_back({m.breakpoints.tmin[k], m.breakpoints.tmax[k]});
  return {{"type", "cpla"},
          {"version", kVersion},
          {"mode", to_string(m.mode)},
          {"target", m.target},
          {"a0", m.a0},
          {"a1", to_std(m.a1)},
          {"basis", basis_to_json(m.basis)},
          {"breakpoints", m.breakpoints.points},
          {"breakpoint_range", range},
          {"slopes", m.slopes},
          {"base_intercept", m.base_intercept},
          {"training", training_json(m.training)}};
}

Model model_from_json(const json& j) {
  try {
    const std::string type = j.at("type").get<std::string>();
    if (type == "cla") {
      ClaModel m;
      m.mode = fit_mode_from_string(j.at("mode").get<std::string>());
      m.target = j.at("target").get<int>();
      m.a0 = j.at("a0").get<double>();
      m.a1 = to_eigen(j.at("a1").get<std::vector<double>>());
      m.training = training_from_json(j.value("training", json::object()));
      return m;
    }
    if (type != "cpla") throw ValidationError("unknown model type '" + type + "'");
    CplaModel m;
    m.mode = fit_mode_from_string(j.at("mode").get<std::string>());
    m.target = j.at("target").get<int>();
    m.a0 = j.at("a0").get<double>();
    m.a1 = to_eigen(j.at("a1").get<std::vector<double>>());
    m.basis = basis_from_json(j.at("basis"));
    m.breakpoints.points = j.at("breakpoints").get<std::vector<std::vector<double>>>();
    for (const auto& r : j.at("breakpoint_range")) {
      m.breakpoints.tmin.push_back(r.at(0).get<double>());
      m.breakpoints.tmax.push_back(r.at(1).get<double>());
    }
    m.slopes = j.at("slopes").get<std::vector<std::vector<double>>>();
    m.base_intercept = j.at("base_intercept").get<double>();
    m.training = training_from_json(j.value("training", json::object()));
    const std::size_t nd = m.basis.size();
    if (m.basis.dim() != static_cast<std::size_t>(m.a1.size()) || m.breakpoints.points.size() != nd ||
        m.breakpoints.tmin.size() != nd || m.slopes.size() != nd)
      throw ValidationError("model: inconsistent dimensions");
    for (std::size_t k = 0; k < nd; ++k) {
      if (m.slopes[k].size() != m.breakpoints.points[k].size() + 1)
        throw ValidationError("model: slope table does not match the breakpoints");
      if (!std::is_sorted(m.breakpoints.points[k].begin(), m.breakpoints.points[k].end()))
        throw ValidationError("model: breakpoints are not sorted");
    }
    return m;
  } catch (const json::exception& e) {
    throw ValidationError(std::string("model: ") + e.what());
  }
}

void write_model(const std::string& path, const Model& model) { write_json_file(path, model_to_json(model)); }

Model read_model(const std::string& path) { return model_from_json(read_json_file(path)); }

json report_to_json(const EvalReport& r) {
  json j = {{"samples", r.samples},
            {"mean_abs_error", r.mean_abs_error},
            {"max_error", r.max_error},
            {"violations", r.violations}};
  if (r.baseline_mean_abs_error) j["baseline_mean_abs_error"] = *r.baseline_mean_abs_error;
  if (r.error_reduction_pct) j["error_reduction_pct"] = *r.error_reduction_pct;
  return j;
}

}  // namespace cpla
