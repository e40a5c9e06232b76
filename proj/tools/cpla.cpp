// cpla: command line front end.
//
// Exit codes: 0 ok, 2 invalid input, 3 numerical failure, 4 I/O error.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cpla/acpf.hpp"
#include "cpla/error.hpp"
#include "cpla/io.hpp"
#include "cpla/lpfit.hpp"
#include "cpla/netcase.hpp"
#include "cpla/pipeline.hpp"
#include "cpla/sampler.hpp"
#include "cpla/sens.hpp"
#include "cpla/version.hpp"

using namespace cpla;
using nlohmann::json;

namespace {

struct PfFlags {
  double tol = 1e-8;
  int max_iter = 20;
  std::string start = "warm";

  void add(CLI::App* app, bool with_start = false) {
    app->add_option("--pf-tol", tol, "Newton mismatch tolerance (pu)")->capture_default_str();
    app->add_option("--pf-max-iter", max_iter, "Newton iteration limit")->capture_default_str();
    if (with_start)
      app->add_option("--pf-start", start, "flat, nominal or warm")
          ->check(CLI::IsMember({"flat", "nominal", "warm"}))
          ->capture_default_str();
  }
  PowerFlowOptions options() const {
    PowerFlowOptions o;
    o.tol = tol;
    o.max_iter = max_iter;
    return o;
  }
};

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") std::cout << text;
  else write_text_file(path, text);
}

std::vector<double> scaled(const std::vector<Bus>& buses, double base, double f, bool reactive) {
  std::vector<double> out;
  for (const Bus& b : buses) out.push_back(f * (reactive ? b.qd : b.pd) / base);
  return out;
}

int run_parse(const std::string& case_path, const std::string& out) {
  const NetworkCase net = load_case_file(case_path);
  std::size_t pv = 0, pq = 0;
  for (const Bus& b : net.buses) {
    if (b.kind == BusKind::PV) ++pv;
    if (b.kind == BusKind::PQ) ++pq;
  }
  std::printf("buses %zu (pv %zu, pq %zu)  branches %zu  generators %zu  base %g MVA  hash %s\n", net.n_bus(), pv, pq,
              net.branches.size(), net.gens.size(), net.base_mva, case_hash(net).c_str());
  if (!out.empty()) write_text_file(out, write_case_json(net));
  return 0;
}

int run_solve(const std::string& case_path, double scale, const PfFlags& pf, const std::string& out) {
  const NetworkCase net = load_case_file(case_path);
  const PowerFlowModel model(net);
  const PowerFlowOptions opts = pf.options();
  const InjectionVector x = model.injections_for_loads(scaled(net.buses, net.base_mva, scale, false),
                                                       scaled(net.buses, net.base_mva, scale, true));
  StateVector start;
  switch (start_kind_from_string(pf.start)) {
    case StartKind::Flat: start = model.flat_start(); break;
    case StartKind::Nominal: start = model.nominal_start(); break;
    case StartKind::Warm: start = solve_nominal(model, opts).state; break;
  }
  const PowerFlowSolution sol = solve_power_flow(model, x, start, opts);
  std::printf("%s after %d iterations, max mismatch %.3g pu\n", sol.converged ? "converged" : "NOT converged",
              sol.iterations, sol.max_mismatch);
  if (!out.empty()) {
    json buses = json::array();
    for (std::size_t i = 0; i < net.n_bus(); ++i)
      buses.push_back({{"id", net.buses[i].id}, {"vm", sol.state.vm[i]}, {"va_deg", sol.state.va[i] * 180.0 / std::numbers::pi}});
    write_json_file(out, {{"converged", sol.converged},
                          {"iterations", sol.iterations},
                          {"max_mismatch", sol.max_mismatch},
                          {"load_scale", scale},
                          {"buses", buses}});
  }
  if (!sol.converged) throw NumericalError("power flow did not converge");
  return 0;
}

DirectionSelection selection(std::size_t dirs, double tau) {
  if (dirs > 0) return {dirs, 0.9};
  return {std::nullopt, tau};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conservative piecewise linear approximations of power flow voltage magnitudes"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  PfFlags pf;
  std::string case_path, out, samples_path, model_path, baseline_path, sens_path, config_path, mode = "under";
  double scale = 1.0, tau = 0.9, eps = 0.01;
  std::size_t n_samples = 10000, dirs = 1, breakpoints = 5;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  int target = 0;
  std::vector<int> targets;
  std::string quantity = "vm";
  bool cla = false, regularize = false;
  std::vector<double> range;

  auto* parse = app.add_subcommand("parse", "Read a MATPOWER case and print a summary");
  parse->add_option("case", case_path, "Case file")->required();
  parse->add_option("--json", out, "Write the canonical JSON form here");

  auto* solve = app.add_subcommand("solve", "Solve one power flow");
  solve->add_option("case", case_path, "Case file")->required();
  solve->add_option("--scale", scale, "Multiply every load by this factor")->capture_default_str();
  solve->add_option("--out", out, "Write voltages as JSON");
  pf.add(solve, true);

  auto* sample = app.add_subcommand("sample", "Draw load samples and solve them");
  sample->add_option("case", case_path, "Case file")->required();
  sample->add_option("--samples,-S", n_samples, "Number of samples")->capture_default_str();
  sample->add_option("--seed", seed, "Random seed")->capture_default_str();
  sample->add_option("--range", range, "Load fractions lo hi")->expected(2);
  sample->add_option("--targets", targets, "Target bus ids")->required()->delimiter(',');
  sample->add_option("--workers", workers, "Worker threads (0 = all cores)");
  sample->add_option("--out", out, "Sample file")->required();
  pf.add(sample);

  auto* sensitivity = app.add_subcommand("sensitivity", "Second-order sensitivity and dominant directions");
  sensitivity->add_option("case", case_path, "Case file")->required();
  sensitivity->add_option("--target", target, "Bus id")->required();
  sensitivity->add_option("--quantity", quantity, "vm or va")->check(CLI::IsMember({"vm", "va"}));
  auto* sens_dirs = sensitivity->add_option("--dirs", dirs, "Number of directions");
  sensitivity->add_option("--tau", tau, "Energy threshold when --dirs is absent")->excludes(sens_dirs);
  sensitivity->add_option("--range", range, "Expand at the center of this load range (lo hi)")->expected(2);
  sensitivity->add_option("--out", out, "Output JSON")->required();
  pf.add(sensitivity);

  auto* fit = app.add_subcommand("fit", "Fit a CLA or CPLA model");
  fit->add_option("--samples", samples_path, "Sample file")->required();
  fit->add_option("--target", target, "Bus id")->required();
  fit->add_option("--mode", mode, "under or over")->check(CLI::IsMember({"under", "over"}))->capture_default_str();
  fit->add_flag("--cla", cla, "Plain conservative linear fit");
  auto* fit_sens = fit->add_option("--sensitivity", sens_path, "Directions from a sensitivity file");
  fit->add_option("--case", case_path, "Compute directions from this case instead")->excludes(fit_sens);
  fit->add_option("--dirs", dirs, "Number of directions")->capture_default_str();
  fit->add_option("--breakpoints,-M", breakpoints, "Breakpoints per direction")->capture_default_str();
  fit->add_flag("--regularize", regularize, "Order slopes by curvature sign");
  fit->add_option("--eps", eps, "Probability for the sample sufficiency warning")->capture_default_str();
  fit->add_option("--out", out, "Model JSON")->required();
  pf.add(fit);

  auto* eval = app.add_subcommand("eval", "Evaluate a model on a sample file");
  eval->add_option("--model", model_path, "Model JSON")->required();
  eval->add_option("--samples", samples_path, "Sample file")->required();
  eval->add_option("--baseline", baseline_path, "Baseline model for the error reduction");
  eval->add_option("--out", out, "Report JSON (stdout if absent)");

  // pipeline and sweep share the config flags
  PipelineConfig cfg;
  std::vector<std::size_t> bp_list, sweep_values;
  std::string sweep_axis, out_dir;
  std::optional<std::size_t> o_samples, o_dirs;
  std::optional<std::uint64_t> o_seed;
  std::optional<double> o_tau, o_eps, o_tol;
  std::optional<int> o_max_iter;
  std::optional<std::string> o_mode, o_case;
  bool o_regularize = false;
  auto add_config_flags = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Pipeline config (JSON)");
    sub->add_option("--case", o_case, "Case file");
    sub->add_option("--samples,-S", o_samples, "Number of training samples");
    sub->add_option("--seed", o_seed, "Random seed");
    sub->add_option("--range", range, "Load fractions lo hi")->expected(2);
    sub->add_option("--targets", targets, "Target bus ids")->delimiter(',');
    sub->add_option("--mode", o_mode, "under or over")->check(CLI::IsMember({"under", "over"}));
    sub->add_option("--dirs", o_dirs, "Number of directions");
    sub->add_option("--tau", o_tau, "Energy threshold for the number of directions");
    sub->add_option("--breakpoints,-M", bp_list, "Breakpoint counts")->delimiter(',');
    sub->add_option("--sweep-axis", sweep_axis, "n_dirs or vector")->check(CLI::IsMember({"n_dirs", "vector"}));
    sub->add_option("--sweep-values", sweep_values, "Values along the sweep axis")->delimiter(',');
    sub->add_option("--eps", o_eps, "Probability for the sample sufficiency warning");
    sub->add_flag("--regularize", o_regularize, "Order slopes by curvature sign");
    sub->add_option("--pf-tol", o_tol, "Newton mismatch tolerance (pu)");
    sub->add_option("--pf-max-iter", o_max_iter, "Newton iteration limit");
    sub->add_option("--out-dir", out_dir, "Output directory");
    sub->add_option("--workers", workers, "Worker threads (0 = all cores)");
  };
  auto* pipeline = app.add_subcommand("pipeline", "Sample, fit and evaluate end to end");
  add_config_flags(pipeline);
  auto* sweep = app.add_subcommand("sweep", "Run the pipeline over a (directions, M) grid and print the CSV");
  add_config_flags(sweep);

  std::vector<std::string> model_paths, labels;
  auto* histogram = app.add_subcommand("histogram", "Per-sample signed errors as CSV");
  histogram->add_option("--samples", samples_path, "Sample file")->required();
  histogram->add_option("--model", model_paths, "Model JSON (repeatable)");
  histogram->add_option("--label", labels, "Name per model (defaults to the file stem)");
  histogram->add_option("--out", out, "CSV output (stdout if absent)");

  std::vector<std::string> cases;
  BenchOptions bench_opts;
  std::vector<std::size_t> bench_bp;
  auto* bench = app.add_subcommand("bench", "Timing table per case and breakpoint count");
  bench->add_option("cases", cases, "Case files")->required();
  bench->add_option("--pf-samples", bench_opts.pf_samples, "Power flows to time")->capture_default_str();
  bench->add_option("--fit-samples", bench_opts.fit_samples, "Samples per fit")->capture_default_str();
  bench->add_option("--breakpoints,-M", bench_bp, "Breakpoint counts (default 1,10)")->delimiter(',');
  bench->add_flag("--pf-only", bench_opts.pf_only, "Only time power flow solves");
  bench->add_option("--out", out, "CSV output (stdout if absent)");
  pf.add(bench);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("cpla"));
  spdlog::set_pattern("%^%l%$: %v");
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    if (*parse) return run_parse(case_path, out);
    if (*solve) return run_solve(case_path, scale, pf, out);

    if (*sample) {
      const NetworkCase net = load_case_file(case_path);
      const PowerFlowModel model(net);
      if (range.empty()) range = {0.5, 1.5};
      SampleSolveOptions so;
      so.pf = pf.options();
      so.workers = workers;
      const SampleSet s = sample_case(model, make_range(net, range[0], range[1]), n_samples, seed, targets, so);
      write_samples(out, s);
      std::printf("%zu samples (%zu dropped) -> %s\n", s.size(), s.dropped, out.c_str());
      return 0;
    }

    if (*sensitivity) {
      const NetworkCase net = load_case_file(case_path);
      const PowerFlowModel model(net);
      if (range.empty()) range = {1.0, 1.0};
      const PowerFlowSolution base = solve_range_center(model, make_range(net, range[0], range[1]), pf.options());
      const SensitivityMatrix sens =
          second_order_sensitivity(model, base, {target, quantity_from_string(quantity)}, pf.options());
      const DirectionBasis b = dominant_directions(sens, selection(sens_dirs->count() ? dirs : 0, tau));
      write_sensitivity_json(out, sens, b);
      for (std::size_t k = 0; k < b.size(); ++k) std::printf("direction %zu  eigenvalue %.6g\n", k + 1, b.values[Eigen::Index(k)]);
      return 0;
    }

    if (*fit) {
      const SampleSet s = read_samples(samples_path);
      const FitMode fm = fit_mode_from_string(mode);
      const FitOptions fo{nullptr, eps};
      Model m;
      if (cla) {
        m = fit_cla(s, target, fm, fo);
      } else {
        DirectionBasis basis;
        if (!sens_path.empty()) {
          SensitivityTarget st;
          basis = read_basis_json(sens_path, &st);
          if (st.bus_id != target)
            throw ValidationError("sensitivity file is for bus " + std::to_string(st.bus_id) + ", not " +
                                  std::to_string(target));
        } else if (!case_path.empty()) {
          const NetworkCase net = load_case_file(case_path);
          if (case_hash(net) != s.case_hash) throw ValidationError("samples were drawn from a different case");
          const PowerFlowModel model(net);
          const PowerFlowSolution base =
              solve_range_center(model, make_range(net, s.fraction_lo, s.fraction_hi), pf.options());
          basis = dominant_directions(second_order_sensitivity(model, base, {target, Quantity::VoltageMagnitude}, pf.options()),
                                      {dirs, 0.9});
        } else {
          throw ValidationError("a CPLA fit needs --sensitivity or --case (or use --cla)");
        }
        if (dirs == 0 || dirs > basis.size())
          throw ValidationError("--dirs must be between 1 and " + std::to_string(basis.size()));
        DirectionBasis sub;
        sub.vectors = basis.vectors.leftCols(Eigen::Index(dirs));
        sub.values = basis.values.head(Eigen::Index(dirs));
        sub.signs.assign(basis.signs.begin(), basis.signs.begin() + std::ptrdiff_t(dirs));
        m = fit_cpla(s, target, sub, breakpoints, fm, regularize, fo);
      }
      write_model(out, m);
      const TrainingInfo& t = model_training(m);
      std::printf("training error %.6g pu/sample, %zu LP variables -> %s\n", t.loss, t.lp_variables, out.c_str());
      return 0;
    }

    if (*eval) {
      const Model m = read_model(model_path);
      const SampleSet s = read_samples(samples_path);
      std::optional<Model> base;
      if (!baseline_path.empty()) base = read_model(baseline_path);
      const EvalReport r = evaluate(m, s, base ? &*base : nullptr);
      json j = report_to_json(r);
      j["target"] = model_target(m);
      j["model"] = std::filesystem::path(model_path).filename().string();
      j["seed"] = s.seed;
      j["version"] = kVersion;
      if (!model_training(m).config_hash.empty()) j["config_hash"] = model_training(m).config_hash;
      emit(out, j.dump(2) + "\n");
      return 0;
    }

    if (*pipeline || *sweep) {
      if (!config_path.empty()) cfg = read_config(config_path);
      if (o_case) cfg.case_path = *o_case;
      if (o_samples) cfg.samples = *o_samples;
      if (o_seed) cfg.seed = *o_seed;
      if (!range.empty()) {
        cfg.fraction_lo = range[0];
        cfg.fraction_hi = range[1];
      }
      if (!targets.empty()) cfg.targets = targets;
      if (o_mode) cfg.mode = fit_mode_from_string(*o_mode);
      if (o_dirs) cfg.directions = {*o_dirs, 0.9};
      if (o_tau) cfg.directions = {std::nullopt, *o_tau};
      if (!bp_list.empty()) cfg.breakpoints = bp_list;
      if (!sweep_axis.empty()) cfg.sweep_axis = sweep_axis_from_string(sweep_axis);
      if (!sweep_values.empty()) cfg.sweep_values = sweep_values;
      if (o_eps) cfg.eps = *o_eps;
      if (o_regularize) cfg.regularize = true;
      if (o_tol) cfg.pf.tol = *o_tol;
      if (o_max_iter) cfg.pf.max_iter = *o_max_iter;
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if ((*pipeline ? pipeline : sweep)->count("--workers")) cfg.workers = workers;
      const PipelineResult r = cmd_pipeline(cfg);
      if (*sweep) {
        std::cout << sweep_csv(r.sweep);
      } else {
        for (const SweepRow& row : r.sweep.rows)
          std::printf("bus %d  %s %zu  M %zu  error %.4g pu  reduction %.2f%%  violations %zu\n", row.target,
                      to_string(r.sweep.axis).c_str(), row.index, row.m, row.error_per_sample, row.reduction_pct,
                      row.violations);
        std::printf("config %s -> %s\n", r.config_hash.c_str(), cfg.output_dir.c_str());
      }
      return 0;
    }

    if (*histogram) {
      const SampleSet s = read_samples(samples_path);
      std::vector<Model> models;
      for (const auto& p : model_paths) models.push_back(read_model(p));
      for (std::size_t i = labels.size(); i < model_paths.size(); ++i)
        labels.push_back(std::filesystem::path(model_paths[i]).stem().string());
      emit(out, cmd_histogram(models, labels, s));
      return 0;
    }

    if (*bench) {
      bench_opts.pf = pf.options();
      if (!bench_bp.empty()) bench_opts.breakpoints = bench_bp;
      emit(out, bench_csv(cmd_bench(cases, bench_opts)));
      return 0;
    }
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const NumericalError& e) {
    spdlog::error("{}", e.what());
    return 3;
  } catch (const IoError& e) {
    spdlog::error("{}", e.what());
    return 4;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
