#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace cpla {

enum class BusKind { Slack, PV, PQ };

std::string_view to_string(BusKind kind);
BusKind bus_kind_from_string(std::string_view s);

struct Bus {
  int id = 0;
  BusKind kind = BusKind::PQ;
  double pd = 0.0;  // MW
  double qd = 0.0;  // MVAr
  double gs = 0.0;  // MW at 1 pu
  double bs = 0.0;  // MVAr at 1 pu
  double vm0 = 1.0;  // pu
  double va0 = 0.0;  // degrees
  double vmin = 0.9;
  double vmax = 1.1;

  bool operator==(const Bus&) const = default;
};

struct Branch {
  int from = 0;
  int to = 0;
  double r = 0.0;
  double x = 0.0;
  double b_charge = 0.0;
  double tap = 0.0;  // 0 is read as 1.0
  double shift = 0.0;  // degrees
  bool in_service = true;

  bool operator==(const Branch&) const = default;
};

struct Generator {
  int bus = 0;
  double pg = 0.0;  // MW
  double qg = 0.0;  // MVAr
  double vg = 1.0;  // pu
  bool in_service = true;

  bool operator==(const Generator&) const = default;
};

/// A balanced single-phase network. Internal bus index = position in
/// `buses`; external ids are arbitrary and resolved through BusIndexMap.
struct NetworkCase {
  double base_mva = 100.0;
  std::vector<Bus> buses;
  std::vector<Branch> branches;
  std::vector<Generator> gens;

  std::size_t n_bus() const { return buses.size(); }

  bool operator==(const NetworkCase&) const = default;
};

using BusIndexMap = std::unordered_map<int, std::size_t>;

/// External id -> internal index. Throws ValidationError on duplicate ids.
BusIndexMap make_bus_index(const NetworkCase& net);

/// Checks every structural invariant of a case: unique ids, exactly one
/// slack bus, positive initial magnitudes, valid branch endpoints and
/// impedances, generators on existing buses, PV/slack buses backed by an
/// in-service generator, and a connected in-service graph.
void validate_case(const NetworkCase& net);

/// Net injections at every bus in pu on base_mva (generation minus load).
std::vector<double> net_active_injection(const NetworkCase& net);
std::vector<double> net_reactive_injection(const NetworkCase& net);

/// Voltage magnitude held at a PV or slack bus: setpoint of the first
/// in-service generator, vm0 for PQ buses.
std::vector<double> voltage_setpoints(const NetworkCase& net);

/// Parses the bus/gen/branch/baseMVA subset of a MATPOWER case file.
/// Unrecognised statements are skipped and reported through `warnings`
/// (and the log). The common Ohm-to-pu and kW-to-MW conversion blocks found
/// at the end of distribution feeder files are recognised and applied.
NetworkCase parse_matpower(std::string_view text, std::vector<std::string>* warnings = nullptr);

NetworkCase load_case_file(const std::string& path);

std::string write_case_json(const NetworkCase& net);
NetworkCase read_case_json(std::string_view text);

/// Stable 64-bit FNV-1a digest of the canonical JSON form, as 16 hex chars.
std::string case_hash(const NetworkCase& net);

/// Complex admittance matrix G + jB in pu, compressed-row storage with
/// sorted columns. Every row stores its diagonal even when it is zero.
struct AdmittanceMatrix {
  std::size_t n = 0;
  std::vector<std::size_t> row_ptr;
  std::vector<std::size_t> col;
  std::vector<double> g;
  std::vector<double> b;

  double g_at(std::size_t i, std::size_t j) const;
  double b_at(std::size_t i, std::size_t j) const;
  std::size_t row_begin(std::size_t i) const { return row_ptr[i]; }
  std::size_t row_end(std::size_t i) const { return row_ptr[i + 1]; }
};

/// Standard pi-model assembly including off-nominal taps, phase shifters,
/// line charging and bus shunts.
AdmittanceMatrix build_admittance(const NetworkCase& net);

}  // namespace cpla
