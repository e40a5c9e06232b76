#include <nlohmann/json.hpp>

#include "cpla/error.hpp"
#include "cpla/hash.hpp"
#include "cpla/netcase.hpp"

namespace cpla {
namespace {

using nlohmann::json;

template <typename T>
T get_field(const json& obj, const char* key, const char* where) {
  if (!obj.is_object()) throw ValidationError(std::string("schema: ") + where + " must be an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(std::string("schema: ") + where + " is missing '" + key + "'");
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ValidationError(std::string("schema: ") + where + "." + key + " has the wrong type");
  }
}

const json& get_array(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ValidationError(std::string("schema: case is missing '") + key + "'");
  if (!it->is_array()) throw ValidationError(std::string("schema: '") + key + "' must be an array");
  return *it;
}

json to_json(const NetworkCase& net) {
  json doc;
  doc["base_mva"] = net.base_mva;
  json buses = json::array();
  for (const Bus& b : net.buses) {
    buses.push_back({{"id", b.id},
                     {"kind", to_string(b.kind)},
                     {"pd", b.pd},
                     {"qd", b.qd},
                     {"gs", b.gs},
                     {"bs", b.bs},
                     {"vm0", b.vm0},
                     {"va0", b.va0},
                     {"vmin", b.vmin},
                     {"vmax", b.vmax}});
  }
  json branches = json::array();
  for (const Branch& br : net.branches) {
    branches.push_back({{"from", br.from},
                        {"to", br.to},
                        {"r", br.r},
                        {"x", br.x},
                        {"b_charge", br.b_charge},
                        {"tap", br.tap},
                        {"shift", br.shift},
                        {"status", br.in_service}});
  }
  json gens = json::array();
  for (const Generator& g : net.gens) {
    gens.push_back({{"bus", g.bus}, {"pg", g.pg}, {"qg", g.qg}, {"vg", g.vg}, {"status", g.in_service}});
  }
  doc["buses"] = std::move(buses);
  doc["branches"] = std::move(branches);
  doc["gens"] = std::move(gens);
  return doc;
}

}  // namespace

std::string write_case_json(const NetworkCase& net) { return to_json(net).dump(2) + "\n"; }

NetworkCase read_case_json(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("case JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ValidationError("schema: case must be a JSON object");

  NetworkCase net;
  net.base_mva = get_field<double>(doc, "base_mva", "case");
  for (const json& b : get_array(doc, "buses")) {
    Bus bus;
    bus.id = get_field<int>(b, "id", "bus");
    bus.kind = bus_kind_from_string(get_field<std::string>(b, "kind", "bus"));
    bus.pd = get_field<double>(b, "pd", "bus");
    bus.qd = get_field<double>(b, "qd", "bus");
    bus.gs = get_field<double>(b, "gs", "bus");
    bus.bs = get_field<double>(b, "bs", "bus");
    bus.vm0 = get_field<double>(b, "vm0", "bus");
    bus.va0 = get_field<double>(b, "va0", "bus");
    bus.vmin = get_field<double>(b, "vmin", "bus");
    bus.vmax = get_field<double>(b, "vmax", "bus");
    net.buses.push_back(bus);
  }
  for (const json& b : get_array(doc, "branches")) {
    Branch br;
    br.from = get_field<int>(b, "from", "branch");
    br.to = get_field<int>(b, "to", "branch");
    br.r = get_field<double>(b, "r", "branch");
    br.x = get_field<double>(b, "x", "branch");
    br.b_charge = get_field<double>(b, "b_charge", "branch");
    br.tap = get_field<double>(b, "tap", "branch");
    br.shift = get_field<double>(b, "shift", "branch");
    br.in_service = get_field<bool>(b, "status", "branch");
    net.branches.push_back(br);
  }
  for (const json& g : get_array(doc, "gens")) {
    Generator gen;
    gen.bus = get_field<int>(g, "bus", "gen");
    gen.pg = get_field<double>(g, "pg", "gen");
    gen.qg = get_field<double>(g, "qg", "gen");
    gen.vg = get_field<double>(g, "vg", "gen");
    gen.in_service = get_field<bool>(g, "status", "gen");
    net.gens.push_back(gen);
  }
  return net;
}

std::string case_hash(const NetworkCase& net) {
  return hex64(fnv1a(to_json(net).dump()));
}

}  // namespace cpla
