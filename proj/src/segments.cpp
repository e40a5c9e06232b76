#include "cpla/segments.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "cpla/error.hpp"

namespace cpla {

std::size_t Breakpoints::n_regions() const {
  std::size_t c = 1;
  for (std::size_t k = 0; k < points.size(); ++k) c *= segments(k);
  return c;
}

Breakpoints make_breakpoints(const RowMatrix& t, std::size_t m) {
  if (t.rows() == 0) throw ValidationError("cannot place breakpoints without samples");
  Breakpoints bp;
  for (Eigen::Index k = 0; k < t.cols(); ++k) {
    const double lo = t.col(k).minCoeff(), hi = t.col(k).maxCoeff();
    const double span = hi - lo;
    if (!(span > 1e-12 * std::max({1.0, std::abs(lo), std::abs(hi)})))
      throw ValidationError("degenerate direction " + std::to_string(k + 1) + ": samples have zero width");
    std::vector<double> pts;
    for (std::size_t j = 1; j <= m; ++j) pts.push_back(lo + span * static_cast<double>(j) / static_cast<double>(m + 1));
    for (std::size_t j = 1; j < pts.size(); ++j)
      if (!(pts[j] > pts[j - 1])) throw ValidationError("direction " + std::to_string(k + 1) + " is too narrow for " +
                                                        std::to_string(m) + " breakpoints");
    bp.points.push_back(std::move(pts));
    bp.tmin.push_back(lo);
    bp.tmax.push_back(hi);
  }
  return bp;
}

SegmentIndex assign_segments(const double* t, const Breakpoints& bp) {
  SegmentIndex b(bp.n_dirs());
  for (std::size_t k = 0; k < bp.n_dirs(); ++k) {
    const auto& p = bp.points[k];
    b[k] = static_cast<int>(std::upper_bound(p.begin(), p.end(), t[k]) - p.begin());
  }
  return b;
}

std::size_t region_id(const SegmentIndex& b, const Breakpoints& bp) {
  std::size_t id = 0;
  for (std::size_t k = 0; k < bp.n_dirs(); ++k) id = id * bp.segments(k) + static_cast<std::size_t>(b[k]);
  return id;
}

SegmentIndex region_index(std::size_t id, const Breakpoints& bp) {
  SegmentIndex b(bp.n_dirs());
  for (std::size_t k = bp.n_dirs(); k-- > 0;) {
    b[k] = static_cast<int>(id % bp.segments(k));
    id /= bp.segments(k);
  }
  return b;
}

}  // namespace cpla
