#include "cpla/sampler.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "cpla/error.hpp"
#include "cpla/parallel.hpp"
#include "cpla/version.hpp"

namespace cpla {

OperatingRange make_range(const NetworkCase& net, double fraction_lo, double fraction_hi) {
  if (!(fraction_lo >= 0.0 && fraction_lo <= fraction_hi) || !std::isfinite(fraction_hi))
    throw ValidationError("operating range needs 0 <= lo <= hi");
  OperatingRange r;
  r.fraction_lo = fraction_lo;
  r.fraction_hi = fraction_hi;
  for (const Bus& b : net.buses) {
    const double p = b.pd / net.base_mva, q = b.qd / net.base_mva;
    r.pd_min.push_back(std::min(p * fraction_lo, p * fraction_hi));
    r.pd_max.push_back(std::max(p * fraction_lo, p * fraction_hi));
    r.qd_min.push_back(std::min(q * fraction_lo, q * fraction_hi));
    r.qd_max.push_back(std::max(q * fraction_lo, q * fraction_hi));
  }
  return r;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double counter_uniform(std::uint64_t seed, std::uint64_t sample, std::uint64_t coord) {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(seed) ^ sample) ^ coord);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

RowMatrix draw_samples(const PowerFlowModel& model, const OperatingRange& range, std::size_t s, std::uint64_t seed) {
  const NetworkCase& net = model.network();
  const std::size_t nb = net.n_bus();
  if (s == 0) throw ValidationError("sample count must be at least 1");
  if (range.pd_min.size() != nb) throw ValidationError("operating range does not match the case");
  const std::size_t slack = model.layout().slack;
  RowMatrix out(Eigen::Index(s), Eigen::Index(model.n_state()));
  std::vector<double> pd(nb), qd(nb);
  for (std::size_t row = 0; row < s; ++row) {
    for (std::size_t i = 0; i < nb; ++i) {
      if (i == slack) {
        pd[i] = net.buses[i].pd / net.base_mva;
        qd[i] = net.buses[i].qd / net.base_mva;
        continue;
      }
      const double up = counter_uniform(seed, row, 2 * i);
      const double uq = counter_uniform(seed, row, 2 * i + 1);
      pd[i] = range.pd_min[i] + up * (range.pd_max[i] - range.pd_min[i]);
      qd[i] = range.qd_min[i] + uq * (range.qd_max[i] - range.qd_min[i]);
    }
    out.row(Eigen::Index(row)) = model.injections_for_loads(pd, qd).transpose();
  }
  return out;
}

PowerFlowSolution solve_nominal(const PowerFlowModel& model, const PowerFlowOptions& opts) {
  const PowerFlowSolution sol = solve_power_flow(model, model.nominal_injections(), model.flat_start(), opts);
  if (!sol.converged) throw NumericalError("nominal power flow did not converge");
  return sol;
}

InjectionVector range_center(const PowerFlowModel& model, const OperatingRange& range) {
  const NetworkCase& net = model.network();
  const std::size_t nb = net.n_bus();
  if (range.pd_min.size() != nb) throw ValidationError("operating range does not match the case");
  std::vector<double> pd(nb), qd(nb);
  for (std::size_t i = 0; i < nb; ++i) {
    if (i == model.layout().slack) {
      pd[i] = net.buses[i].pd / net.base_mva;
      qd[i] = net.buses[i].qd / net.base_mva;
    } else {
      pd[i] = 0.5 * (range.pd_min[i] + range.pd_max[i]);
      qd[i] = 0.5 * (range.qd_min[i] + range.qd_max[i]);
    }
  }
  return model.injections_for_loads(pd, qd);
}

PowerFlowSolution solve_range_center(const PowerFlowModel& model, const OperatingRange& range,
                                     const PowerFlowOptions& opts) {
  const PowerFlowSolution nominal = solve_nominal(model, opts);
  const PowerFlowSolution sol = solve_power_flow(model, range_center(model, range), nominal.state, opts);
  if (!sol.converged) throw NumericalError("power flow at the center of the operating range did not converge");
  return sol;
}

std::size_t SampleSet::target_column(int bus_id) const {
  auto it = std::find(targets.begin(), targets.end(), bus_id);
  if (it == targets.end()) throw ValidationError("samples carry no values for target bus " + std::to_string(bus_id));
  return static_cast<std::size_t>(it - targets.begin());
}

SampleSet solve_samples(const PowerFlowModel& model, const RowMatrix& injections, const std::vector<int>& targets,
                        const SampleSolveOptions& opts) {
  if (static_cast<std::size_t>(injections.cols()) != model.n_state())
    throw ValidationError("injection matrix has " + std::to_string(injections.cols()) + " columns, case needs " +
                          std::to_string(model.n_state()));
  const BusIndexMap index = make_bus_index(model.network());
  std::vector<std::size_t> tbus;
  for (int id : targets) {
    auto it = index.find(id);
    if (it == index.end()) throw ValidationError("unknown target bus " + std::to_string(id));
    tbus.push_back(it->second);
  }

  const PowerFlowSolution nominal = solve_nominal(model, opts.pf);
  const std::size_t s = static_cast<std::size_t>(injections.rows());
  std::vector<char> ok(s, 0);
  Eigen::MatrixXd vals(Eigen::Index(s), Eigen::Index(tbus.size()));
  parallel_for(s, opts.workers, [&](std::size_t row) {
    const InjectionVector x = injections.row(Eigen::Index(row)).transpose();
    try {
      const PowerFlowSolution sol = solve_power_flow(model, x, nominal.state, opts.pf);
      if (!sol.converged) return;
      for (std::size_t t = 0; t < tbus.size(); ++t) vals(Eigen::Index(row), Eigen::Index(t)) = sol.state.vm[tbus[t]];
      ok[row] = 1;
    } catch (const NumericalError&) {
    }
  });

  SampleSet out;
  out.targets = targets;
  out.solves = s;
  out.case_hash = case_hash(model.network());
  const std::size_t kept = static_cast<std::size_t>(std::count(ok.begin(), ok.end(), 1));
  out.dropped = s - kept;
  if (static_cast<double>(out.dropped) > opts.max_failure_fraction * static_cast<double>(s))
    throw NumericalError(std::to_string(out.dropped) + " of " + std::to_string(s) +
                         " samples failed to converge; the operating range is likely infeasible");
  if (out.dropped) spdlog::warn("dropped {} of {} samples that failed to converge", out.dropped, s);
  out.injections.resize(Eigen::Index(kept), injections.cols());
  out.values.resize(Eigen::Index(kept), Eigen::Index(tbus.size()));
  Eigen::Index r = 0;
  for (std::size_t row = 0; row < s; ++row) {
    if (!ok[row]) continue;
    out.injections.row(r) = injections.row(Eigen::Index(row));
    out.values.row(r) = vals.row(Eigen::Index(row));
    ++r;
  }
  return out;
}

SampleSet sample_case(const PowerFlowModel& model, const OperatingRange& range, std::size_t s, std::uint64_t seed,
                      const std::vector<int>& targets, const SampleSolveOptions& opts) {
  SampleSet set = solve_samples(model, draw_samples(model, range, s, seed), targets, opts);
  set.seed = seed;
  set.fraction_lo = range.fraction_lo;
  set.fraction_hi = range.fraction_hi;
  return set;
}

std::size_t sample_sufficiency(std::size_t regions, double eps) {
  if (regions < 1) throw ValidationError("region count must be at least 1");
  if (!(eps > 0.0 && eps < 1.0)) throw ValidationError("eps must lie in (0, 1)");
  const double c = static_cast<double>(regions);
  return static_cast<std::size_t>(std::ceil(c * std::log(c / eps)));
}

std::vector<SegmentIndex> RegionCensus::empty_regions(const Breakpoints& bp) const {
  std::vector<SegmentIndex> out;
  for (std::size_t id = 0; id < counts.size(); ++id)
    if (counts[id] == 0) out.push_back(region_index(id, bp));
  return out;
}

RegionCensus region_census(const RowMatrix& t, const Breakpoints& bp) {
  if (static_cast<std::size_t>(t.cols()) != bp.n_dirs())
    throw ValidationError("rotated samples and breakpoints disagree on the number of directions");
  RegionCensus c;
  c.counts.assign(bp.n_regions(), 0);
  for (Eigen::Index s = 0; s < t.rows(); ++s) ++c.counts[region_id(assign_segments(t.row(s).data(), bp), bp)];
  c.empties = static_cast<std::size_t>(std::count(c.counts.begin(), c.counts.end(), 0));
  return c;
}

namespace {

constexpr char kMagic[8] = {'C', 'P', 'L', 'A', 'S', 'M', 'P', '1'};

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

}  // namespace

void write_samples(const std::string& path, const SampleSet& set) {
  const std::size_t s = set.size(), n = set.n_inj(), nt = set.targets.size();
  if (static_cast<std::size_t>(set.values.rows()) != s || static_cast<std::size_t>(set.values.cols()) != nt)
    throw ValidationError("sample set values do not match its injections and targets");
  nlohmann::json header = {{"format", 1},     {"case_hash", set.case_hash}, {"seed", set.seed},
                           {"S", s},          {"n_inj", n},                 {"targets", set.targets},
                           {"dropped", set.dropped}, {"solves", set.solves},
                           {"range", {set.fraction_lo, set.fraction_hi}}, {"version", kVersion}};
  if (!set.config_hash.empty()) header["config_hash"] = set.config_hash;
  const std::string hdr = header.dump();
  std::string buf(kMagic, sizeof kMagic);
  put_u64(buf, hdr.size());
  buf += hdr;
  buf.reserve(buf.size() + 8 * s * (n + nt));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < s; ++i) put_u64(buf, std::bit_cast<std::uint64_t>(set.injections(Eigen::Index(i), Eigen::Index(j))));
  for (std::size_t j = 0; j < nt; ++j)
    for (std::size_t i = 0; i < s; ++i) put_u64(buf, std::bit_cast<std::uint64_t>(set.values(Eigen::Index(i), Eigen::Index(j))));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw IoError("error writing '" + path + "'");
}

SampleSet read_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 16 || std::memcmp(data.data(), kMagic, 8) != 0)
    throw ValidationError("'" + path + "' is not a sample file");
  const std::uint64_t hlen = get_u64(data.data() + 8);
  if (hlen > data.size() - 16) throw ValidationError("'" + path + "': truncated header");
  SampleSet set;
  std::size_t s = 0, n = 0;
  try {
    const auto header = nlohmann::json::parse(data.begin() + 16, data.begin() + 16 + static_cast<std::ptrdiff_t>(hlen));
    if (header.at("format").get<int>() != 1) throw ValidationError("'" + path + "': unsupported sample file format");
    set.case_hash = header.at("case_hash").get<std::string>();
    set.seed = header.at("seed").get<std::uint64_t>();
    s = header.at("S").get<std::size_t>();
    n = header.at("n_inj").get<std::size_t>();
    set.targets = header.at("targets").get<std::vector<int>>();
    set.dropped = header.at("dropped").get<std::size_t>();
    set.solves = header.value("solves", std::size_t{0});
    set.config_hash = header.value("config_hash", std::string());
    const auto range = header.value("range", std::vector<double>{0.0, 0.0});
    if (range.size() == 2) {
      set.fraction_lo = range[0];
      set.fraction_hi = range[1];
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path + "': bad header: " + e.what());
  }
  const std::size_t nt = set.targets.size();
  const std::size_t body = 16 + hlen;
  if (data.size() - body != 8 * s * (n + nt)) throw ValidationError("'" + path + "': body size does not match header");
  set.injections.resize(Eigen::Index(s), Eigen::Index(n));
  set.values.resize(Eigen::Index(s), Eigen::Index(nt));
  const unsigned char* p = data.data() + body;
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < s; ++i, p += 8) set.injections(Eigen::Index(i), Eigen::Index(j)) = std::bit_cast<double>(get_u64(p));
  for (std::size_t j = 0; j < nt; ++j)
    for (std::size_t i = 0; i < s; ++i, p += 8) set.values(Eigen::Index(i), Eigen::Index(j)) = std::bit_cast<double>(get_u64(p));
  return set;
}

}  // namespace cpla
