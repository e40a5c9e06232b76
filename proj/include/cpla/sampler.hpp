#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cpla/acpf.hpp"
#include "cpla/matrix.hpp"
#include "cpla/segments.hpp"

namespace cpla {

/// Box of per-bus load bounds (pu), nominal load scaled by [lo, hi].
struct OperatingRange {
  double fraction_lo = 0.5;
  double fraction_hi = 1.5;
  std::vector<double> pd_min, pd_max, qd_min, qd_max;  // per internal bus
};

OperatingRange make_range(const NetworkCase& net, double fraction_lo, double fraction_hi);

/// Uniform in [0, 1) from (seed, sample, coordinate) alone, so any worker
/// can produce any sample.
double counter_uniform(std::uint64_t seed, std::uint64_t sample, std::uint64_t coord);

/// S x n_inj injection vectors with loads drawn uniformly from the box.
/// Only non-slack loads move; generation stays at its scheduled value.
RowMatrix draw_samples(const PowerFlowModel& model, const OperatingRange& range, std::size_t s, std::uint64_t seed);

struct SampleSet {
  RowMatrix injections;        // S x n_inj (pu)
  std::vector<int> targets;    // bus ids
  Eigen::MatrixXd values;      // S x targets.size(), voltage magnitudes (pu)
  RowMatrix rotated;           // S x N once a basis is applied, else empty
  std::uint64_t seed = 0;
  std::size_t dropped = 0;
  std::size_t solves = 0;      // power flow solves performed
  std::string case_hash;
  std::string config_hash;     // set by the pipeline, empty otherwise
  double fraction_lo = 0.0, fraction_hi = 0.0;

  std::size_t size() const { return static_cast<std::size_t>(injections.rows()); }
  std::size_t n_inj() const { return static_cast<std::size_t>(injections.cols()); }
  /// Column of `values` for a target bus; throws ValidationError if absent.
  std::size_t target_column(int bus_id) const;
  Eigen::VectorXd target_values(int bus_id) const { return values.col(Eigen::Index(target_column(bus_id))); }
};

struct SampleSolveOptions {
  PowerFlowOptions pf;
  unsigned workers = 0;  // 0 = hardware concurrency
  double max_failure_fraction = 0.1;
};

/// Solves every row of `injections`, each from the nominal solution, and
/// records |V| at every target bus. Rows that fail to converge are
/// dropped and counted; more than max_failure_fraction failures throws
/// NumericalError.
SampleSet solve_samples(const PowerFlowModel& model, const RowMatrix& injections, const std::vector<int>& targets,
                        const SampleSolveOptions& opts = {});

/// draw_samples followed by solve_samples, with seed and range recorded.
SampleSet sample_case(const PowerFlowModel& model, const OperatingRange& range, std::size_t s, std::uint64_t seed,
                      const std::vector<int>& targets, const SampleSolveOptions& opts = {});

/// Solution of the nominal point from a flat start; the warm start for every sample.
PowerFlowSolution solve_nominal(const PowerFlowModel& model, const PowerFlowOptions& opts = {});

/// Injections at the middle of the box; the slack keeps its nominal load.
InjectionVector range_center(const PowerFlowModel& model, const OperatingRange& range);

/// Converged solution at the box center, warm-started from the nominal
/// solution. Throws NumericalError when it does not converge.
PowerFlowSolution solve_range_center(const PowerFlowModel& model, const OperatingRange& range,
                                     const PowerFlowOptions& opts = {});

/// Smallest S with C (1 - 1/C)^S <= eps under the exponential bound:
/// ceil(C ln(C / eps)).
std::size_t sample_sufficiency(std::size_t regions, double eps);

struct RegionCensus {
  std::vector<std::size_t> counts;  // indexed by region_id
  std::size_t empties = 0;

  std::vector<SegmentIndex> empty_regions(const Breakpoints& bp) const;
};

RegionCensus region_census(const RowMatrix& t, const Breakpoints& bp);

/// Columnar binary file: 8-byte magic, little-endian u64 header length,
/// JSON header, then one little-endian float64 block per column
/// (injections first, then target values).
void write_samples(const std::string& path, const SampleSet& set);
SampleSet read_samples(const std::string& path);

}  // namespace cpla
