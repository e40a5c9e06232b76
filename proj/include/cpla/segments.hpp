#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "cpla/matrix.hpp"

namespace cpla {

/// Interior breakpoints per rotated direction plus the training range they
/// were derived from.
struct Breakpoints {
  std::vector<std::vector<double>> points;  // points[k] strictly increasing
  std::vector<double> tmin, tmax;

  std::size_t n_dirs() const { return points.size(); }
  std::size_t segments(std::size_t k) const { return points[k].size() + 1; }
  std::size_t n_regions() const;
};

/// M evenly spaced interior points between the min and max of each column
/// of T. Throws ValidationError on a zero-width column.
Breakpoints make_breakpoints(const RowMatrix& t, std::size_t m);

using SegmentIndex = std::vector<int>;

/// b_k = number of breakpoints <= t_k, so exact hits go right and values
/// outside the range land in the edge segments.
SegmentIndex assign_segments(const double* t, const Breakpoints& bp);
inline SegmentIndex assign_segments(const Eigen::VectorXd& t, const Breakpoints& bp) {
  return assign_segments(t.data(), bp);
}

/// Row-major flattening of a multi-index (direction 0 most significant).
std::size_t region_id(const SegmentIndex& b, const Breakpoints& bp);
SegmentIndex region_index(std::size_t id, const Breakpoints& bp);

}  // namespace cpla
