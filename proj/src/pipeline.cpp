#include "cpla/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cpla/error.hpp"
#include "cpla/hash.hpp"
#include "cpla/io.hpp"
#include "cpla/parallel.hpp"
#include "cpla/sampler.hpp"
#include "cpla/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cpla {

std::string to_string(SweepAxis a) { return a == SweepAxis::Vector ? "vector" : "n_dirs"; }

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "n_dirs") return SweepAxis::Directions;
  if (s == "vector") return SweepAxis::Vector;
  throw ValidationError("unknown sweep axis '" + s + "' (expected n_dirs or vector)");
}

void validate_config(const PipelineConfig& c) {
  if (c.case_path.empty()) throw ValidationError("config: case path is required");
  if (!(c.fraction_lo >= 0.0 && c.fraction_lo <= c.fraction_hi && std::isfinite(c.fraction_hi)))
    throw ValidationError("config: range needs 0 <= lo <= hi");
  if (c.samples == 0) throw ValidationError("config: samples must be positive");
  if (c.targets.empty()) throw ValidationError("config: at least one target bus is required");
  if (std::set<int>(c.targets.begin(), c.targets.end()).size() != c.targets.size())
    throw ValidationError("config: duplicate target bus");
  if (c.directions.count && *c.directions.count == 0) throw ValidationError("config: directions must be at least 1");
  if (!c.directions.count && !(c.directions.tau > 0.0 && c.directions.tau <= 1.0))
    throw ValidationError("config: tau must lie in (0, 1]");
  if (c.breakpoints.empty()) throw ValidationError("config: breakpoints list is empty");
  for (std::size_t i = 1; i < c.breakpoints.size(); ++i)
    if (c.breakpoints[i] <= c.breakpoints[i - 1])
      throw ValidationError("config: breakpoints must be strictly increasing");
  for (std::size_t i = 1; i < c.sweep_values.size(); ++i)
    if (c.sweep_values[i] <= c.sweep_values[i - 1])
      throw ValidationError("config: sweep values must be strictly increasing");
  if (!c.sweep_values.empty() && c.sweep_values.front() == 0) throw ValidationError("config: sweep values start at 1");
  if (c.sweep_axis == SweepAxis::Vector && c.sweep_values.empty())
    throw ValidationError("config: a vector sweep needs explicit values");
  if (!(c.eps > 0.0 && c.eps < 1.0)) throw ValidationError("config: eps must lie in (0, 1)");
  if (!(c.pf.tol > 0.0)) throw ValidationError("config: pf tolerance must be positive");
  if (c.pf.max_iter < 1) throw ValidationError("config: pf max_iter must be at least 1");
  if (c.output_dir.empty()) throw ValidationError("config: output directory is required");
}

void validate_targets(const PipelineConfig& cfg, const NetworkCase& net) {
  const BusIndexMap idx = make_bus_index(net);
  for (int t : cfg.targets) {
    const auto it = idx.find(t);
    if (it == idx.end()) throw ValidationError("config: target bus " + std::to_string(t) + " is not in the case");
    if (net.buses[it->second].kind != BusKind::PQ)
      throw ValidationError("config: target bus " + std::to_string(t) + " has a fixed voltage magnitude");
  }
}

namespace {

json hashed_fields(const PipelineConfig& c) {
  json dirs = c.directions.count ? json(*c.directions.count) : json{{"tau", c.directions.tau}};
  return {{"case", c.case_path},
          {"range", {c.fraction_lo, c.fraction_hi}},
          {"samples", c.samples},
          {"holdout", c.holdout},
          {"seed", c.seed},
          {"targets", c.targets},
          {"mode", to_string(c.mode)},
          {"directions", dirs},
          {"sweep", {{"axis", to_string(c.sweep_axis)}, {"values", c.sweep_values}}},
          {"breakpoints", c.breakpoints},
          {"eps", c.eps},
          {"regularize", c.regularize},
          {"pf", {{"tol", c.pf.tol}, {"max_iter", c.pf.max_iter}}}};
}

template <typename T>
T get_field(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("config: field '") + key + "' has the wrong type");
  }
}

}  // namespace

json config_to_json(const PipelineConfig& c) {
  json j = hashed_fields(c);
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  return j;
}

PipelineConfig config_from_json(const json& j) {
  static const std::set<std::string> known = {"case",        "range", "samples",    "holdout", "seed",
                                              "targets",     "mode",  "directions", "sweep",   "breakpoints",
                                              "eps",         "regularize", "pf",    "output_dir", "workers"};
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.count(k)) throw ValidationError("config: unknown field '" + k + "'");
  PipelineConfig c;
  c.case_path = get_field<std::string>(j, "case", "");
  const auto range = get_field<std::vector<double>>(j, "range", {c.fraction_lo, c.fraction_hi});
  if (range.size() != 2) throw ValidationError("config: range must be [lo, hi]");
  c.fraction_lo = range[0];
  c.fraction_hi = range[1];
  c.samples = get_field<std::size_t>(j, "samples", c.samples);
  c.holdout = get_field<std::size_t>(j, "holdout", c.holdout);
  c.seed = get_field<std::uint64_t>(j, "seed", c.seed);
  c.targets = get_field<std::vector<int>>(j, "targets", {});
  c.mode = fit_mode_from_string(get_field<std::string>(j, "mode", "under"));
  if (j.contains("directions")) {
    const json& d = j.at("directions");
    if (d.is_number_unsigned()) {
      c.directions = {d.get<std::size_t>(), 0.9};
    } else if (d.is_object() && d.contains("tau")) {
      c.directions = {std::nullopt, get_field<double>(d, "tau", 0.9)};
    } else {
      throw ValidationError("config: directions must be a count or {\"tau\": x}");
    }
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    if (!s.is_object()) throw ValidationError("config: sweep must be an object");
    c.sweep_axis = sweep_axis_from_string(get_field<std::string>(s, "axis", "n_dirs"));
    c.sweep_values = get_field<std::vector<std::size_t>>(s, "values", {});
  }
  c.breakpoints = get_field<std::vector<std::size_t>>(j, "breakpoints", c.breakpoints);
  c.eps = get_field<double>(j, "eps", c.eps);
  c.regularize = get_field<bool>(j, "regularize", c.regularize);
  if (j.contains("pf")) {
    const json& p = j.at("pf");
    c.pf.tol = get_field<double>(p, "tol", c.pf.tol);
    c.pf.max_iter = get_field<int>(p, "max_iter", c.pf.max_iter);
  }
  c.output_dir = get_field<std::string>(j, "output_dir", c.output_dir);
  c.workers = get_field<unsigned>(j, "workers", c.workers);
  validate_config(c);
  return c;
}

PipelineConfig read_config(const std::string& path) { return config_from_json(read_json_file(path)); }

std::string config_hash(const PipelineConfig& cfg) { return hex64(fnv1a(hashed_fields(cfg).dump())); }

std::string csv_field(const std::string& s, bool force) {
  if (!force && s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

std::string format_sig3(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

namespace {

std::string shortest(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string header_row(std::initializer_list<const char*> names) {
  std::string out;
  for (const char* n : names) {
    if (!out.empty()) out += ',';
    out += csv_field(n, true);
  }
  return out + "\r\n";
}

// Runs one stage, prefixing any error with its name while keeping the
// error category intact.
template <typename Fn>
auto stage(const char* name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(std::string(name) + ": " + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(std::string(name) + ": " + e.what());
  } catch (const IoError& e) {
    throw IoError(std::string(name) + ": " + e.what());
  }
}

RowMatrix rows_of(const RowMatrix& m, Eigen::Index start, Eigen::Index count) { return m.middleRows(start, count); }

SampleSet slice(const SampleSet& all, std::size_t start, std::size_t count) {
  SampleSet s = all;
  s.injections = rows_of(all.injections, Eigen::Index(start), Eigen::Index(count));
  s.values = all.values.middleRows(Eigen::Index(start), Eigen::Index(count));
  return s;
}

DirectionBasis columns(const DirectionBasis& b, std::size_t first, std::size_t count) {
  DirectionBasis out;
  out.vectors = b.vectors.middleCols(Eigen::Index(first), Eigen::Index(count));
  out.values = b.values.segment(Eigen::Index(first), Eigen::Index(count));
  out.signs.assign(b.signs.begin() + std::ptrdiff_t(first), b.signs.begin() + std::ptrdiff_t(first + count));
  return out;
}

std::string cell_name(SweepAxis axis, int target, std::size_t index, std::size_t m) {
  return "bus" + std::to_string(target) + (axis == SweepAxis::Vector ? "_v" : "_n") + std::to_string(index) + "_m" +
         std::to_string(m);
}

json report_json(const EvalReport& train, const std::optional<EvalReport>& holdout, const std::string& model_file,
                 int target, const std::string& hash, std::uint64_t seed) {
  json j = {{"config_hash", hash}, {"seed", seed},   {"version", kVersion},
            {"target", target},    {"model", model_file}, {"train", report_to_json(train)}};
  if (holdout) j["holdout"] = report_to_json(*holdout);
  return j;
}

bool cached(const std::string& path, const std::string& hash, const std::function<std::string()>& embedded) {
  if (!fs::exists(path)) return false;
  try {
    return embedded() == hash;
  } catch (const std::exception& e) {
    spdlog::warn("ignoring unreadable cache file {}: {}", path, e.what());
    return false;
  }
}

}  // namespace

std::string sweep_csv(const SweepResult& r) {
  std::string out = header_row({"target", r.axis == SweepAxis::Vector ? "vector" : "n_dirs", "M", "error_per_sample",
                                "reduction_pct", "t_fit", "violations"});
  for (const SweepRow& row : r.rows) {
    out += std::to_string(row.target) + ',' + std::to_string(row.index) + ',' + std::to_string(row.m) + ',' +
           shortest(row.error_per_sample) + ',' + shortest(row.reduction_pct) + ',' + format_sig3(row.t_fit) + ',' +
           std::to_string(row.violations) + "\r\n";
  }
  return out;
}

PipelineResult cmd_pipeline(const PipelineConfig& cfg) {
  validate_config(cfg);
  PipelineResult result;
  const std::string hash = config_hash(cfg);
  result.config_hash = hash;
  const fs::path dir(cfg.output_dir);
  auto out_path = [&](const std::string& name) {
    const std::string p = (dir / name).string();
    result.artifacts.push_back(p);
    return p;
  };

  const NetworkCase net = stage("load", [&] {
    NetworkCase n = load_case_file(cfg.case_path);
    validate_targets(cfg, n);
    return n;
  });
  stage("output", [&] {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    write_json_file(out_path("config.json"),
                    {{"config", config_to_json(cfg)}, {"config_hash", hash}, {"version", kVersion}});
  });
  const PowerFlowModel model(net);
  const OperatingRange range = make_range(net, cfg.fraction_lo, cfg.fraction_hi);
  SampleSolveOptions so;
  so.pf = cfg.pf;
  so.workers = cfg.workers;

  // sample
  const std::string samples_path = out_path("samples.bin");
  const SampleSet all = stage("sample", [&] {
    if (cached(samples_path, hash, [&] { return read_samples(samples_path).config_hash; })) {
      spdlog::info("reusing {}", samples_path);
      result.sweep.t_pf_ms = std::nan("");
      return read_samples(samples_path);
    }
    const auto start = std::chrono::steady_clock::now();
    SampleSet s = sample_case(model, range, cfg.samples + cfg.holdout, cfg.seed, cfg.targets, so);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.sweep.t_pf_ms = 1e3 * secs * double(resolve_workers(cfg.workers)) / double(std::max<std::size_t>(s.solves, 1));
    s.config_hash = hash;
    write_samples(samples_path, s);
    return s;
  });
  const std::size_t n_train = std::min(cfg.samples, all.size());
  const SampleSet train = slice(all, 0, n_train);
  const std::optional<SampleSet> holdout =
      all.size() > n_train ? std::optional<SampleSet>(slice(all, n_train, all.size() - n_train)) : std::nullopt;
  if (n_train < cfg.samples)
    spdlog::warn("{} samples dropped; training on {}", cfg.samples + cfg.holdout - all.size(), n_train);

  // sensitivity + directions
  std::size_t need = 0;
  if (!cfg.sweep_values.empty()) need = cfg.sweep_values.back();
  else if (cfg.directions.count) need = *cfg.directions.count;
  std::map<int, DirectionBasis> bases;
  stage("sensitivity", [&] {
    std::vector<int> todo;
    for (int t : cfg.targets) {
      const std::string p = out_path("sensitivity_bus" + std::to_string(t) + ".json");
      if (cached(p, hash, [&] { return read_json_file(p).value("config_hash", std::string()); })) {
        bases[t] = read_basis_json(p);
      } else {
        todo.push_back(t);
      }
    }
    if (todo.empty()) return;
    const PowerFlowSolution base = solve_range_center(model, range, cfg.pf);
    const SensitivityEngine engine(model, base, cfg.pf);
    std::vector<SensitivityTarget> targets;
    for (int t : todo) targets.push_back({t, Quantity::VoltageMagnitude});
    const auto sens = engine.compute_all(targets, cfg.workers);
    for (std::size_t i = 0; i < todo.size(); ++i) {
      const DirectionBasis b = dominant_directions(sens[i], need ? DirectionSelection{need, 0.9} : cfg.directions);
      json j = sensitivity_to_json(sens[i], b);
      j["config_hash"] = hash;
      j["version"] = kVersion;
      write_json_file((dir / ("sensitivity_bus" + std::to_string(todo[i]) + ".json")).string(), j);
      bases[todo[i]] = b;
    }
  });

  // CLA baselines
  std::map<int, Model> cla;
  stage("fit", [&] {
    for (int t : cfg.targets) {
      ClaModel m = fit_cla(train, t, cfg.mode, {nullptr, cfg.eps});
      m.training.config_hash = hash;
      const std::string name = "cla_bus" + std::to_string(t) + ".json";
      write_model(out_path(name), m);
      cla.emplace(t, m);
      const EvalReport r = evaluate(m, train);
      std::optional<EvalReport> h;
      if (holdout) h = evaluate(m, *holdout);
      write_json_file(out_path("report_cla_bus" + std::to_string(t) + ".json"),
                      report_json(r, h, name, t, hash, cfg.seed));
    }
  });

  // CPLA grid
  struct Cell {
    int target;
    std::size_t index, m;
  };
  std::vector<Cell> cells;
  for (int t : cfg.targets) {
    const std::size_t have = bases.at(t).size();
    std::vector<std::size_t> idx = cfg.sweep_values;
    if (idx.empty()) idx.push_back(have);
    for (std::size_t i : idx) {
      if (i > have)
        throw ValidationError("fit: bus " + std::to_string(t) + " has only " + std::to_string(have) + " directions");
      for (std::size_t m : cfg.breakpoints) cells.push_back({t, i, m});
    }
  }
  result.sweep.axis = cfg.sweep_axis;
  result.sweep.rows.resize(cells.size());
  for (const Cell& c : cells) {
    out_path("cpla_" + cell_name(cfg.sweep_axis, c.target, c.index, c.m) + ".json");
    out_path("report_" + cell_name(cfg.sweep_axis, c.target, c.index, c.m) + ".json");
  }
  stage("fit", [&] {
    parallel_for(cells.size(), cfg.workers, [&](std::size_t k) {
      const Cell& c = cells[k];
      const DirectionBasis& full = bases.at(c.target);
      const DirectionBasis b =
          cfg.sweep_axis == SweepAxis::Vector ? columns(full, c.index - 1, 1) : columns(full, 0, c.index);
      const auto start = std::chrono::steady_clock::now();
      CplaModel m = fit_cpla(train, c.target, b, c.m, cfg.mode, cfg.regularize, {nullptr, cfg.eps});
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      m.training.config_hash = hash;
      const std::string stem = cell_name(cfg.sweep_axis, c.target, c.index, c.m);
      write_model((dir / ("cpla_" + stem + ".json")).string(), m);
      const Model& base = cla.at(c.target);
      const EvalReport r = evaluate(m, train, &base);
      std::optional<EvalReport> h;
      if (holdout) h = evaluate(m, *holdout, &base);
      write_json_file((dir / ("report_" + stem + ".json")).string(),
                      report_json(r, h, "cpla_" + stem + ".json", c.target, hash, cfg.seed));
      result.sweep.rows[k] = {c.target, c.index, c.m, r.mean_abs_error, r.error_reduction_pct.value_or(0.0), secs,
                              r.violations};
    });
  });

  stage("report", [&] { write_text_file(out_path("sweep.csv"), sweep_csv(result.sweep)); });
  return result;
}

std::string cmd_histogram(const std::vector<Model>& models, const std::vector<std::string>& labels,
                          const SampleSet& samples) {
  std::string out = header_row({"model", "sample", "signed_error"});
  for (std::size_t k = 0; k < models.size(); ++k) {
    const Model& m = models[k];
    const int target = model_target(m);
    if (std::find(samples.targets.begin(), samples.targets.end(), target) == samples.targets.end())
      throw ValidationError("model targets bus " + std::to_string(target) + ", which the samples do not cover");
    if (static_cast<std::size_t>(std::visit([](const auto& x) { return x.a1.size(); }, m)) != samples.n_inj())
      throw ValidationError("model and samples have different injection dimensions");
    const std::string label = csv_field(k < labels.size() ? labels[k] : "model_" + std::to_string(k));
    const Eigen::VectorXd err = samples.target_values(target) - predict(m, samples.injections);
    for (Eigen::Index i = 0; i < err.size(); ++i) out += label + ',' + std::to_string(i) + ',' + shortest(err[i]) + "\r\n";
  }
  return out;
}

std::vector<BenchRow> cmd_bench(const std::vector<std::string>& case_paths, const BenchOptions& opts) {
  using clock = std::chrono::steady_clock;
  auto since = [](clock::time_point t) { return std::chrono::duration<double>(clock::now() - t).count(); };
  std::vector<BenchRow> rows;
  for (const std::string& path : case_paths) {
    const NetworkCase net = load_case_file(path);
    const PowerFlowModel model(net);
    BenchRow row;
    row.case_name = fs::path(path).stem().string();
    row.buses = net.n_bus();

    const PowerFlowSolution nominal = solve_nominal(model, opts.pf);
    double vmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < net.n_bus(); ++i)
      if (net.buses[i].kind == BusKind::PQ && nominal.state.vm[i] < vmin) {
        vmin = nominal.state.vm[i];
        row.target = net.buses[i].id;
      }
    if (row.target == 0 && vmin == std::numeric_limits<double>::infinity())
      throw ValidationError(row.case_name + ": no PQ bus to target");

    const OperatingRange range = make_range(net, 0.5, 1.5);
    SampleSolveOptions so;
    so.pf = opts.pf;
    so.workers = 1;
    const RowMatrix w = draw_samples(model, range, std::max<std::size_t>(opts.pf_samples, 1), opts.seed);
    auto t0 = clock::now();
    const SampleSet pf = solve_samples(model, w, {row.target}, so);
    row.t_pf_ms = 1e3 * since(t0) / double(std::max<std::size_t>(pf.solves, 1));
    if (opts.pf_only) {
      rows.push_back(row);
      continue;
    }

    t0 = clock::now();
    const SensitivityMatrix sens = second_order_sensitivity(model, nominal, {row.target, Quantity::VoltageMagnitude}, opts.pf);
    const DirectionBasis basis = dominant_directions(sens, {1, 0.9});
    row.t_sens_s = since(t0);

    so.workers = 0;
    const SampleSet train = sample_case(model, range, opts.fit_samples, opts.seed, {row.target}, so);
    for (std::size_t m : opts.breakpoints) {
      BenchRow r = row;
      r.m = m;
      r.has_fit = true;
      t0 = clock::now();
      fit_cpla(train, row.target, basis, m, FitMode::Under, false);
      r.t_fit_s = since(t0);
      rows.push_back(r);
    }
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = header_row({"case", "buses", "target", "t_pf_ms", "t_sens_s", "M", "t_fit_s"});
  for (const BenchRow& r : rows) {
    out += csv_field(r.case_name) + ',' + std::to_string(r.buses) + ',' + std::to_string(r.target) + ',' +
           format_sig3(r.t_pf_ms) + ',' + (r.has_fit ? format_sig3(r.t_sens_s) : "") + ',' +
           (r.has_fit ? std::to_string(r.m) : "") + ',' + (r.has_fit ? format_sig3(r.t_fit_s) : "") + "\r\n";
  }
  return out;
}

}  // namespace cpla
