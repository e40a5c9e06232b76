#include "cpla/netcase.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "cpla/error.hpp"
#include "cpla/io.hpp"

namespace cpla {

std::string_view to_string(BusKind kind) {
  switch (kind) {
    case BusKind::Slack:
      return "slack";
    case BusKind::PV:
      return "pv";
    case BusKind::PQ:
      return "pq";
  }
  return "pq";
}

BusKind bus_kind_from_string(std::string_view s) {
  if (s == "slack") return BusKind::Slack;
  if (s == "pv") return BusKind::PV;
  if (s == "pq") return BusKind::PQ;
  throw ValidationError("unknown bus kind '" + std::string(s) + "'");
}

BusIndexMap make_bus_index(const NetworkCase& net) {
  BusIndexMap index;
  index.reserve(net.buses.size());
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    if (!index.emplace(net.buses[i].id, i).second)
      throw ValidationError("duplicate bus id " + std::to_string(net.buses[i].id));
  }
  return index;
}

void validate_case(const NetworkCase& net) {
  if (!(net.base_mva > 0.0)) throw ValidationError("base_mva must be positive");
  if (net.buses.empty()) throw ValidationError("case has no buses");
  const BusIndexMap index = make_bus_index(net);

  std::size_t n_slack = 0;
  for (const Bus& bus : net.buses) {
    if (bus.kind == BusKind::Slack) ++n_slack;
    if (!(bus.vm0 > 0.0))
      throw ValidationError("bus " + std::to_string(bus.id) + ": initial voltage magnitude must be positive");
  }
  if (n_slack == 0) throw ValidationError("missing slack bus");
  if (n_slack > 1) throw ValidationError("more than one slack bus");

  std::vector<bool> has_gen(net.buses.size(), false);
  for (const Generator& gen : net.gens) {
    auto it = index.find(gen.bus);
    if (it == index.end())
      throw ValidationError("generator at unknown bus " + std::to_string(gen.bus));
    if (gen.in_service) has_gen[it->second] = true;
  }
  for (std::size_t i = 0; i < net.buses.size(); ++i) {
    if (net.buses[i].kind != BusKind::PQ && !has_gen[i])
      throw ValidationError("bus " + std::to_string(net.buses[i].id) + " is " +
                            std::string(to_string(net.buses[i].kind)) + " but has no in-service generator");
  }

  // Union-find over in-service branches for the connectivity check.
  std::vector<std::size_t> parent(net.buses.size());
  for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
  auto find = [&](std::size_t v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (std::size_t k = 0; k < net.branches.size(); ++k) {
    const Branch& br = net.branches[k];
    auto f = index.find(br.from);
    auto t = index.find(br.to);
    if (f == index.end() || t == index.end())
      throw ValidationError("branch " + std::to_string(k + 1) + " references unknown bus " +
                            std::to_string(f == index.end() ? br.from : br.to));
    if (br.from == br.to) throw ValidationError("branch " + std::to_string(k + 1) + " is a self loop");
    if (!br.in_service) continue;
    if (br.r * br.r + br.x * br.x <= 0.0)
      throw ValidationError("branch " + std::to_string(k + 1) + " has zero impedance");
    parent[find(f->second)] = find(t->second);
  }
  const std::size_t root = find(0);
  for (std::size_t i = 1; i < net.buses.size(); ++i) {
    if (find(i) != root)
      throw ValidationError("network is not connected (bus " + std::to_string(net.buses[i].id) + " is islanded)");
  }
}

std::vector<double> net_active_injection(const NetworkCase& net) {
  const BusIndexMap index = make_bus_index(net);
  std::vector<double> p(net.buses.size());
  for (std::size_t i = 0; i < net.buses.size(); ++i) p[i] = -net.buses[i].pd;
  for (const Generator& gen : net.gens)
    if (gen.in_service) p[index.at(gen.bus)] += gen.pg;
  for (double& v : p) v /= net.base_mva;
  return p;
}

std::vector<double> net_reactive_injection(const NetworkCase& net) {
  const BusIndexMap index = make_bus_index(net);
  std::vector<double> q(net.buses.size());
  for (std::size_t i = 0; i < net.buses.size(); ++i) q[i] = -net.buses[i].qd;
  for (const Generator& gen : net.gens)
    if (gen.in_service) q[index.at(gen.bus)] += gen.qg;
  for (double& v : q) v /= net.base_mva;
  return q;
}

std::vector<double> voltage_setpoints(const NetworkCase& net) {
  const BusIndexMap index = make_bus_index(net);
  std::vector<double> vm(net.buses.size());
  std::vector<bool> set(net.buses.size(), false);
  for (std::size_t i = 0; i < net.buses.size(); ++i) vm[i] = net.buses[i].vm0;
  for (const Generator& gen : net.gens) {
    if (!gen.in_service) continue;
    const std::size_t i = index.at(gen.bus);
    if (net.buses[i].kind == BusKind::PQ || set[i]) continue;
    vm[i] = gen.vg;
    set[i] = true;
  }
  return vm;
}

NetworkCase load_case_file(const std::string& path) {
  const std::string text = read_text_file(path);
  NetworkCase net;
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    net = read_case_json(text);
  } else {
    net = parse_matpower(text);
  }
  validate_case(net);
  return net;
}

double AdmittanceMatrix::g_at(std::size_t i, std::size_t j) const {
  auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  auto it = std::lower_bound(first, last, j);
  return (it != last && *it == j) ? g[static_cast<std::size_t>(it - col.begin())] : 0.0;
}

double AdmittanceMatrix::b_at(std::size_t i, std::size_t j) const {
  auto first = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i]);
  auto last = col.begin() + static_cast<std::ptrdiff_t>(row_ptr[i + 1]);
  auto it = std::lower_bound(first, last, j);
  return (it != last && *it == j) ? b[static_cast<std::size_t>(it - col.begin())] : 0.0;
}

AdmittanceMatrix build_admittance(const NetworkCase& net) {
  using cd = std::complex<double>;
  const BusIndexMap index = make_bus_index(net);
  const std::size_t n = net.buses.size();

  std::vector<std::map<std::size_t, cd>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    rows[i][i] += cd(net.buses[i].gs, net.buses[i].bs) / net.base_mva;
  }
  for (const Branch& br : net.branches) {
    if (!br.in_service) continue;
    const std::size_t f = index.at(br.from);
    const std::size_t t = index.at(br.to);
    const cd ys = 1.0 / cd(br.r, br.x);
    const double ratio = br.tap == 0.0 ? 1.0 : br.tap;
    const cd tap = std::polar(ratio, br.shift * std::numbers::pi / 180.0);
    const cd ytt = ys + cd(0.0, br.b_charge / 2.0);
    rows[f][f] += ytt / (ratio * ratio);
    rows[t][t] += ytt;
    rows[f][t] += -ys / std::conj(tap);
    rows[t][f] += -ys / tap;
  }

  AdmittanceMatrix y;
  y.n = n;
  y.row_ptr.reserve(n + 1);
  y.row_ptr.push_back(0);
  for (const auto& row : rows) {
    for (const auto& [j, v] : row) {
      y.col.push_back(j);
      y.g.push_back(v.real());
      y.b.push_back(v.imag());
    }
    y.row_ptr.push_back(y.col.size());
  }
  return y;
}

}  // namespace cpla
