#include "cpla/lp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/LU>

#include "cpla/error.hpp"
#include "cpla/simd/kernels.hpp"

namespace cpla {

void LinearProgram::validate() const {
  const auto n = c.size();
  if (a.rows() > 0 && a.cols() != n) throw ValidationError("LP: A has the wrong number of columns");
  if (a.rows() != u.size()) throw ValidationError("LP: A and u differ in length");
  if (e.rows() > 0 && e.cols() != n) throw ValidationError("LP: E has the wrong number of columns");
  if (e.rows() != v.size()) throw ValidationError("LP: E and v differ in length");
  if (lower.size() != 0 && lower.size() != n) throw ValidationError("LP: lower bounds have the wrong length");
  if (upper.size() != 0 && upper.size() != n) throw ValidationError("LP: upper bounds have the wrong length");
  if (!c.allFinite() || !a.allFinite() || !u.allFinite() || !e.allFinite() || !v.allFinite())
    throw ValidationError("LP: non-finite coefficient");
}

std::string to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
    case LpStatus::IterationLimit: return "iteration limit";
  }
  return "unknown";
}

namespace {

enum class CoreStatus { Optimal, DualInfeasible, DualUnbounded, IterationLimit };

struct CoreResult {
  CoreStatus status = CoreStatus::Optimal;
  Eigen::VectorXd z;
  Eigen::VectorXd lambda;  // per row of g
  std::size_t iterations = 0;
};

// Simplex on  min h'l  s.t.  G'l = -c,  l >= 0,  the dual of
// min c'z s.t. G z <= h. Rows of g must have unit norm (or be skipped).
class DualSimplex {
 public:
  DualSimplex(const RowMatrix& g, const Eigen::VectorXd& h, const Eigen::VectorXd& c, const std::vector<char>& usable,
              const SimplexOptions& opts)
      : g_(g), h_(h), b_(-c), usable_(usable), opts_(opts), k_(simd::active_kernels()),
        m_(static_cast<std::size_t>(g.rows())), n_(static_cast<std::size_t>(g.cols())) {}

  CoreResult run() {
    CoreResult res;
    init_artificial_basis();
    if (!iterate(true, res)) return res;
    double infeas = 0.0;
    for (std::size_t i = 0; i < n_; ++i)
      if (is_artificial(basis_[i])) infeas += beta_[i];
    if (infeas > opts_.feas_tol * std::max(1.0, b_.cwiseAbs().maxCoeff()) * 10.0) {
      res.status = CoreStatus::DualInfeasible;
      return res;
    }
    for (std::size_t i = 0; i < n_; ++i)
      if (is_artificial(basis_[i])) beta_[i] = 0.0;
    if (!iterate(false, res)) return res;

    res.status = CoreStatus::Optimal;
    res.z = pi_;
    res.lambda = Eigen::VectorXd::Zero(Eigen::Index(m_));
    for (std::size_t i = 0; i < n_; ++i)
      if (!is_artificial(basis_[i])) res.lambda[basis_[i]] = std::max(0.0, beta_[i]);
    return res;
  }

 private:
  bool is_artificial(std::size_t var) const { return var >= m_; }

  static std::uint64_t next_random(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static double unit_random(std::uint64_t& state) { return double(next_random(state) >> 11) * 0x1.0p-53; }

  void init_artificial_basis() {
    basis_.resize(n_);
    sign_.resize(n_);
    in_basis_.assign(m_, 0);
    binv_ = RowMatrix::Zero(Eigen::Index(n_), Eigen::Index(n_));
    beta_.resize(Eigen::Index(n_));
    for (std::size_t i = 0; i < n_; ++i) {
      sign_[i] = b_[Eigen::Index(i)] >= 0 ? 1.0 : -1.0;
      basis_[i] = m_ + i;
      binv_(Eigen::Index(i), Eigen::Index(i)) = sign_[i];
      beta_[Eigen::Index(i)] = std::abs(b_[Eigen::Index(i)]);
    }
  }

  double cost(std::size_t var, bool phase1) const {
    if (is_artificial(var)) return phase1 ? 1.0 : 0.0;
    return phase1 ? 0.0 : h_[Eigen::Index(var)];
  }

  void refactor() {
    const auto n = Eigen::Index(n_);
    Eigen::MatrixXd bm = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t i = 0; i < n_; ++i) {
      const std::size_t var = basis_[i];
      if (is_artificial(var)) bm(Eigen::Index(var - m_), Eigen::Index(i)) = sign_[var - m_];
      else bm.col(Eigen::Index(i)) = g_.row(Eigen::Index(var)).transpose();
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(bm);
    if (!lu.isInvertible()) throw NumericalError("LP basis became singular");
    binv_ = lu.inverse();
    beta_ = binv_ * b_;
  }

  // Returns false when the run ended in a terminal non-optimal state
  // (recorded in res).
  bool iterate(bool phase1, CoreResult& res) {
    const auto n = Eigen::Index(n_);
    Eigen::VectorXd cb(n), w(n), d(static_cast<Eigen::Index>(m_));
    Eigen::VectorXd ucost = phase1 ? Eigen::VectorXd::Zero(Eigen::Index(m_)) : h_;
    double best = std::numeric_limits<double>::infinity();
    std::size_t stall = 0;
    std::uint64_t rng = 0x9e3779b97f4a7c15ULL;
    std::vector<std::size_t> cands;

    for (;;) {
      if (res.iterations >= opts_.max_iter) {
        res.status = CoreStatus::IterationLimit;
        return false;
      }
      for (std::size_t i = 0; i < n_; ++i) cb[Eigen::Index(i)] = cost(basis_[i], phase1);
      pi_ = binv_.transpose() * cb;
      const double obj = cb.dot(beta_);
      if (obj < best - 1e-12 * (1.0 + std::abs(best))) {
        best = obj;
        stall = 0;
      } else {
        ++stall;
      }
      // Dantzig while progressing; random improving pivots on a long
      // degenerate plateau; Bland as the last resort.
      const bool randomized = stall > opts_.stall_limit;
      const bool bland = stall > opts_.bland_limit;

      // Pricing: the reduced cost of row j is its slack at the current vertex.
      k_.residual_rows(g_.data(), m_, n_, n_, pi_.data(), ucost.data(), d.data());
      std::size_t enter = m_;
      double best_d = -opts_.opt_tol;
      cands.clear();
      for (std::size_t j = 0; j < m_; ++j) {
        if (in_basis_[j] || !usable_[j]) continue;
        if (d[Eigen::Index(j)] < -opts_.opt_tol && randomized && !bland) cands.push_back(j);
        if (d[Eigen::Index(j)] < best_d) {
          enter = j;
          if (bland) break;
          best_d = d[Eigen::Index(j)];
        }
      }
      if (!cands.empty()) enter = cands[next_random(rng) % cands.size()];
      if (enter == m_) return true;

      k_.gemv_rows(binv_.data(), n_, n_, n_, g_.row(Eigen::Index(enter)).data(), w.data());

      const double wmax = std::max(1.0, w.cwiseAbs().maxCoeff());
      const double piv = opts_.pivot_tol * wmax;
      auto fixed = [&](std::size_t i) { return !phase1 && is_artificial(basis_[i]); };
      std::size_t leave = n_;
      if (!bland) {
        // Harris two-pass ratio test.
        double theta_max = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n_; ++i) {
          const double wi = w[Eigen::Index(i)];
          if (fixed(i)) {
            if (std::abs(wi) > piv) theta_max = std::min(theta_max, opts_.feas_tol / std::abs(wi));
          } else if (wi > piv) {
            theta_max = std::min(theta_max, (beta_[Eigen::Index(i)] + opts_.feas_tol) / wi);
          }
        }
        double best_w = 0.0;
        for (std::size_t i = 0; i < n_; ++i) {
          const double wi = w[Eigen::Index(i)];
          const bool cand = fixed(i) ? std::abs(wi) > piv : wi > piv;
          if (!cand) continue;
          const double ratio = fixed(i) ? 0.0 : beta_[Eigen::Index(i)] / wi;
          if (ratio > theta_max) continue;
          // random tie-break among comparable pivots once stalled
          const double score = randomized ? std::abs(wi) * (1.0 + 0.5 * unit_random(rng)) : std::abs(wi);
          if (score > best_w) {
            best_w = score;
            leave = i;
          }
        }
      } else {
        // Textbook minimum ratio, ties to the smallest variable index.
        std::vector<double> ratio(n_, std::numeric_limits<double>::infinity());
        double best_ratio = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < n_; ++i) {
          const double wi = w[Eigen::Index(i)];
          if (fixed(i) ? std::abs(wi) > piv : wi > piv)
            ratio[i] = fixed(i) ? 0.0 : std::max(0.0, beta_[Eigen::Index(i)]) / wi;
          best_ratio = std::min(best_ratio, ratio[i]);
        }
        for (std::size_t i = 0; i < n_; ++i)
          if (ratio[i] <= best_ratio + 1e-15 && ratio[i] < std::numeric_limits<double>::infinity() &&
              (leave == n_ || basis_[i] < basis_[leave]))
            leave = i;
      }
      if (leave == n_) {
        if (phase1) throw NumericalError("LP phase 1 lost boundedness");
        res.status = CoreStatus::DualUnbounded;
        return false;
      }

      const double wr = w[Eigen::Index(leave)];
      const double theta = fixed(leave) ? 0.0 : std::max(0.0, beta_[Eigen::Index(leave)] / wr);
      beta_ -= theta * w;
      beta_[Eigen::Index(leave)] = theta;

      double* row_r = binv_.row(Eigen::Index(leave)).data();
      for (std::size_t k = 0; k < n_; ++k) row_r[k] /= wr;
      for (std::size_t i = 0; i < n_; ++i) {
        if (i == leave) continue;
        const double wi = w[Eigen::Index(i)];
        if (wi != 0.0) k_.axpy(-wi, row_r, binv_.row(Eigen::Index(i)).data(), n_);
      }
      if (!is_artificial(basis_[leave])) in_basis_[basis_[leave]] = 0;
      basis_[leave] = enter;
      in_basis_[enter] = 1;
      ++res.iterations;
      if (res.iterations % opts_.refactor_every == 0) refactor();
    }
  }

  const RowMatrix& g_;
  const Eigen::VectorXd& h_;
  Eigen::VectorXd b_;
  const std::vector<char>& usable_;
  SimplexOptions opts_;
  const simd::KernelTable& k_;
  std::size_t m_, n_;

  std::vector<std::size_t> basis_;
  std::vector<double> sign_;
  std::vector<char> in_basis_;
  RowMatrix binv_;
  Eigen::VectorXd beta_;
  Eigen::VectorXd pi_;
};

}  // namespace

LpResult RevisedSimplex::solve(const LinearProgram& lp) const {
  lp.validate();
  const auto n = lp.c.size();
  const double inf = std::numeric_limits<double>::infinity();

  // Inequality form G z <= h: A rows, both signs of E rows, finite bounds.
  std::vector<Eigen::Index> lo_rows, up_rows;
  for (Eigen::Index k = 0; k < lp.lower.size(); ++k)
    if (lp.lower[k] > -inf) lo_rows.push_back(k);
  for (Eigen::Index k = 0; k < lp.upper.size(); ++k)
    if (lp.upper[k] < inf) up_rows.push_back(k);
  const Eigen::Index ma = lp.a.rows(), me = lp.e.rows();
  const Eigen::Index m = ma + 2 * me + Eigen::Index(lo_rows.size() + up_rows.size());
  RowMatrix g = RowMatrix::Zero(m, n);
  Eigen::VectorXd h(m);
  if (ma) g.topRows(ma) = lp.a;
  h.head(ma) = lp.u;
  if (me) {
    g.middleRows(ma, me) = lp.e;
    g.middleRows(ma + me, me) = -lp.e;
    h.segment(ma, me) = lp.v;
    h.segment(ma + me, me) = -lp.v;
  }
  Eigen::Index r = ma + 2 * me;
  for (Eigen::Index k : lo_rows) {
    g(r, k) = -1.0;
    h[r++] = -lp.lower[k];
  }
  for (Eigen::Index k : up_rows) {
    g(r, k) = 1.0;
    h[r++] = lp.upper[k];
  }

  // Column then row equilibration.
  Eigen::VectorXd colscale = Eigen::VectorXd::Ones(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double mx = m ? g.col(k).cwiseAbs().maxCoeff() : 0.0;
    if (mx > 0) colscale[k] = 1.0 / mx;
  }
  for (Eigen::Index k = 0; k < n; ++k) g.col(k) *= colscale[k];
  const Eigen::VectorXd cs = lp.c.cwiseProduct(colscale);
  Eigen::VectorXd rowscale = Eigen::VectorXd::Ones(m);
  std::vector<char> usable(static_cast<std::size_t>(m), 1);
  LpResult out;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double nrm = g.row(j).norm();
    if (nrm == 0.0) {
      usable[std::size_t(j)] = 0;
      if (h[j] < -opts_.feas_tol) {
        out.status = LpStatus::Infeasible;
        return out;
      }
      continue;
    }
    rowscale[j] = 1.0 / nrm;
    g.row(j) *= rowscale[j];
    h[j] *= rowscale[j];
  }

  CoreResult core = DualSimplex(g, h, cs, usable, opts_).run();
  out.iterations = core.iterations;
  switch (core.status) {
    case CoreStatus::Optimal: break;
    case CoreStatus::IterationLimit: out.status = LpStatus::IterationLimit; return out;
    case CoreStatus::DualUnbounded: out.status = LpStatus::Infeasible; return out;
    case CoreStatus::DualInfeasible: {
      // The objective is unbounded if the constraints admit any point.
      CoreResult feas = DualSimplex(g, h, Eigen::VectorXd::Zero(n), usable, opts_).run();
      out.iterations += feas.iterations;
      out.status = feas.status == CoreStatus::Optimal ? LpStatus::Unbounded : LpStatus::Infeasible;
      return out;
    }
  }

  out.status = LpStatus::Optimal;
  out.z = core.z.cwiseProduct(colscale);
  out.objective = lp.c.dot(out.z);
  const Eigen::VectorXd lam = core.lambda.cwiseProduct(rowscale);
  out.dual_a = lam.head(ma);
  out.dual_e = lam.segment(ma, me) - lam.segment(ma + me, me);
  return out;
}

LpResult solve_lp(const LinearProgram& lp, const LpSolver* solver) {
  if (solver) return solver->solve(lp);
  return RevisedSimplex().solve(lp);
}

}  // namespace cpla
