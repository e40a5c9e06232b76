#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "cpla/acpf.hpp"
#include "cpla/lpfit.hpp"
#include "cpla/sens.hpp"

namespace cpla {

/// What the sweep varies besides M: the number of leading directions, or
/// which single eigenvector (1-based) is used.
enum class SweepAxis { Directions, Vector };

std::string to_string(SweepAxis a);
SweepAxis sweep_axis_from_string(const std::string& s);

struct PipelineConfig {
  std::string case_path;
  double fraction_lo = 0.5;
  double fraction_hi = 1.5;
  std::size_t samples = 10000;
  std::size_t holdout = 0;  // extra samples drawn after the training set
  std::uint64_t seed = 1;
  std::vector<int> targets;
  FitMode mode = FitMode::Under;
  DirectionSelection directions{1, 0.9};
  SweepAxis sweep_axis = SweepAxis::Directions;
  std::vector<std::size_t> sweep_values;  // empty: just `directions`
  std::vector<std::size_t> breakpoints{5};
  double eps = 0.01;
  bool regularize = false;
  PowerFlowOptions pf;
  std::string output_dir = "cpla-out";
  unsigned workers = 0;  // not part of the hash
};

/// Throws ValidationError on the first bad field. Target buses are checked
/// against the case separately, once it is loaded.
void validate_config(const PipelineConfig& cfg);
void validate_targets(const PipelineConfig& cfg, const NetworkCase& net);

nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig config_from_json(const nlohmann::json& j);
PipelineConfig read_config(const std::string& path);

/// Digest of everything that changes results (output_dir and workers excluded).
std::string config_hash(const PipelineConfig& cfg);

struct SweepRow {
  int target = 0;
  std::size_t index = 0;  // N, or eigenvector number
  std::size_t m = 0;
  double error_per_sample = 0.0;
  double reduction_pct = 0.0;
  double t_fit = 0.0;  // s
  std::size_t violations = 0;
};

struct SweepResult {
  SweepAxis axis = SweepAxis::Directions;
  std::vector<SweepRow> rows;  // sorted by target, index, M
  double t_pf_ms = 0.0;        // average per sample solve
};

/// RFC-4180 text with quoted header names.
std::string sweep_csv(const SweepResult& r);

struct PipelineResult {
  SweepResult sweep;
  std::vector<std::string> artifacts;  // paths written or reused
  std::string config_hash;
};

/// sample -> sensitivity -> directions -> CLA -> CPLA grid -> eval. Stages
/// whose artifacts already carry this config's hash are reused. Errors are
/// rethrown with the stage name prefixed; earlier artifacts stay on disk.
PipelineResult cmd_pipeline(const PipelineConfig& cfg);

/// Signed errors gamma - prediction, one row per sample per model. `labels`
/// names the models in the output (defaults to model_0, model_1, ...).
std::string cmd_histogram(const std::vector<Model>& models, const std::vector<std::string>& labels,
                          const SampleSet& samples);

struct BenchOptions {
  std::size_t pf_samples = 200;
  std::size_t fit_samples = 2000;
  std::vector<std::size_t> breakpoints{1, 10};
  bool pf_only = false;
  std::uint64_t seed = 1;
  PowerFlowOptions pf;
};

struct BenchRow {
  std::string case_name;
  std::size_t buses = 0;
  int target = 0;
  double t_pf_ms = 0.0;
  double t_sens_s = 0.0;  // sensitivity plus eigendecomposition
  std::size_t m = 0;
  double t_fit_s = 0.0;
  bool has_fit = false;
};

/// Timing table per (case, M). The target is the PQ bus with the lowest
/// nominal voltage.
std::vector<BenchRow> cmd_bench(const std::vector<std::string>& case_paths, const BenchOptions& opts);
std::string bench_csv(const std::vector<BenchRow>& rows);

/// Quotes a CSV field when needed; `force` always quotes.
std::string csv_field(const std::string& s, bool force = false);
/// Three significant figures, dot decimal separator.
std::string format_sig3(double v);

}  // namespace cpla
