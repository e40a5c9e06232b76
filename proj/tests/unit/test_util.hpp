#pragma once

#include <string>

#include "cpla/netcase.hpp"

namespace cpla::testing {

inline std::string case_path(const std::string& name) { return std::string(CPLA_DATA_DIR) + "/" + name + ".m"; }

inline NetworkCase load(const std::string& name) { return load_case_file(case_path(name)); }

// Slack at bus 1, PQ load at bus 2, one lossless line x = 0.1 pu.
inline NetworkCase two_bus(double pd_mw = 0.0, double qd_mvar = 0.0) {
  NetworkCase net;
  net.base_mva = 100.0;
  Bus slack;
  slack.id = 1;
  slack.kind = BusKind::Slack;
  Bus load;
  load.id = 2;
  load.kind = BusKind::PQ;
  load.pd = pd_mw;
  load.qd = qd_mvar;
  net.buses = {slack, load};
  Branch line;
  line.from = 1;
  line.to = 2;
  line.r = 0.0;
  line.x = 0.1;
  net.branches = {line};
  Generator gen;
  gen.bus = 1;
  net.gens = {gen};
  return net;
}

inline const char* kTwoBusText = R"(function mpc = tiny
%% two bus test
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
  1 3 0 0 0 0 1 1 0 10 1 1.1 0.9;
  2 1 0 0 0 0 1 1 0 10 1 1.1 0.9;
];
mpc.gen = [
  1 0 0 10 -10 1 100 1 10 0;
];
mpc.branch = [
  1 2 0 0.1 0 0 0 0 0 0 1 -360 360;
];
)";

}  // namespace cpla::testing
