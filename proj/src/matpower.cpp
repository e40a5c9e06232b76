#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "cpla/error.hpp"
#include "cpla/netcase.hpp"

namespace cpla {
namespace {

struct Statement {
  std::string text;
  int line = 0;
};

using Matrix = std::vector<std::vector<double>>;

// Splits MATLAB-ish source into statements. Comments are dropped, "..."
// continuations are joined, and newlines inside brackets are kept so that
// matrix rows can still report their own line numbers.
std::vector<Statement> split_statements(std::string_view src) {
  std::vector<Statement> out;
  Statement cur;
  int line = 1;
  int depth = 0;
  bool in_string = false;
  char prev_sig = '=';
  int open_line = 0;

  auto flush = [&] {
    auto first = cur.text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos) out.push_back(cur);
    cur = Statement{};
  };

  for (std::size_t i = 0; i < src.size(); ++i) {
    const char c = src[i];
    if (cur.text.empty() && !std::isspace(static_cast<unsigned char>(c))) cur.line = line;

    if (in_string) {
      cur.text += c;
      if (c == '\'') in_string = false;
      if (c == '\n') {
        throw ParseError(line, "unterminated string");
      }
      continue;
    }
    if (c == '%') {
      while (i + 1 < src.size() && src[i + 1] != '\n') ++i;
      continue;
    }
    if (c == '.' && src.substr(i, 3) == "...") {
      while (i + 1 < src.size() && src[i + 1] != '\n') ++i;
      if (i + 1 < src.size()) {
        ++i;
        ++line;
      }
      cur.text += ' ';
      continue;
    }
    if (c == '\'' && std::string_view("=([{,; ").find(prev_sig) != std::string_view::npos) {
      in_string = true;
      cur.text += c;
      continue;
    }
    if (c == '[' || c == '{' || c == '(') {
      if (depth == 0) open_line = line;
      ++depth;
    } else if (c == ']' || c == '}' || c == ')') {
      if (depth == 0) throw ParseError(line, std::string("unmatched '") + c + "'");
      --depth;
    }
    if (c == '\n') {
      ++line;
      if (depth == 0) {
        flush();
      } else {
        cur.text += '\n';
      }
      prev_sig = ';';
      continue;
    }
    if ((c == ';' || c == ',') && depth == 0) {
      flush();
      prev_sig = c;
      continue;
    }
    cur.text += c;
    if (!std::isspace(static_cast<unsigned char>(c))) prev_sig = c;
  }
  if (in_string) throw ParseError(line, "unterminated string");
  if (depth != 0) throw ParseError(open_line, "unterminated bracket");
  flush();
  return out;
}

std::string strip_ws(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

std::optional<double> parse_number(std::string_view tok) {
  std::string lower;
  for (char c : tok) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (lower == "inf" || lower == "+inf") return std::numeric_limits<double>::infinity();
  if (lower == "-inf") return -std::numeric_limits<double>::infinity();
  if (lower == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) return std::nullopt;
  return v;
}

Matrix parse_matrix(const std::string& body, int line, const std::string& name) {
  const auto open = body.find('[');
  const auto close = body.rfind(']');
  if (open != 0 || close == std::string::npos || trim(body.substr(close + 1)) != "")
    throw ParseError(line, "mpc." + name + " must be a bracketed numeric matrix");
  Matrix rows;
  std::vector<double> row;
  int row_line = line;
  int cur_line = line;
  std::string tok;

  auto end_token = [&] {
    if (tok.empty()) return;
    auto v = parse_number(tok);
    if (!v) throw ParseError(cur_line, "invalid number '" + tok + "' in mpc." + name);
    if (row.empty()) row_line = cur_line;
    row.push_back(*v);
    tok.clear();
  };
  auto end_row = [&] {
    end_token();
    if (row.empty()) return;
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError(row_line, "mpc." + name + " row has " + std::to_string(row.size()) + " columns, expected " +
                                     std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
    row.clear();
  };

  for (std::size_t i = open + 1; i < close; ++i) {
    const char c = body[i];
    if (c == '\n') {
      end_row();
      ++cur_line;
    } else if (c == ';') {
      end_row();
    } else if (c == ',' || c == ' ' || c == '\t' || c == '\r') {
      end_token();
    } else {
      tok += c;
    }
  }
  end_row();
  return rows;
}

void require_columns(const Matrix& m, std::size_t n, const std::string& name, int line) {
  if (!m.empty() && m.front().size() < n)
    throw ParseError(line, "mpc." + name + " needs at least " + std::to_string(n) + " columns");
}

// "mpc.<name> = <value>" without running a regex over large matrix bodies.
std::optional<std::pair<std::string, std::string>> split_field_assignment(const std::string& s) {
  if (s.rfind("mpc.", 0) != 0) return std::nullopt;
  std::size_t i = 4;
  while (i < s.size() && (std::isalnum(static_cast<unsigned char>(s[i])) || s[i] == '_')) ++i;
  if (i == 4) return std::nullopt;
  std::string name = s.substr(4, i - 4);
  while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
  if (i >= s.size() || s[i] != '=') return std::nullopt;
  return std::make_pair(std::move(name), trim(std::string_view(s).substr(i + 1)));
}

}  // namespace

NetworkCase parse_matpower(std::string_view text, std::vector<std::string>* warnings) {
  const std::vector<Statement> statements = split_statements(text);

  std::optional<double> base_mva;
  std::optional<Matrix> bus, gen, branch;
  int bus_line = 0, gen_line = 0, branch_line = 0;
  std::map<std::string, double> vars;

  auto warn = [&](const std::string& msg) {
    spdlog::warn("{}", msg);
    if (warnings) warnings->push_back(msg);
  };
  auto need = [&](const std::optional<Matrix>& m, const char* name, int line) -> const Matrix& {
    if (!m) throw ParseError(line, std::string("mpc.") + name + " used before definition");
    return *m;
  };
  auto var = [&](const std::string& name, int line) {
    auto it = vars.find(name);
    if (it == vars.end()) throw ParseError(line, "undefined variable '" + name + "'");
    return it->second;
  };

  static const std::regex scalar_assign(R"(^([A-Za-z_]\w*)=([-+0-9.eE]+)$)");
  static const std::regex index_import(R"(^\[[\w,]*\]=idx_(bus|brch|gen|cost)$)");
  constexpr std::size_t kBaseKv = 9, kPd = 2, kQd = 3, kR = 2, kX = 3;

  for (const Statement& st : statements) {
    const std::string s = trim(st.text);
    const std::string compact = strip_ws(s);
    std::smatch m;

    if (s.rfind("function", 0) == 0 || compact == "return" || compact == "define_constants") continue;
    // libstdc++ regex recurses per character; keep matrix bodies away from it.
    const bool short_stmt = compact.size() < 256;
    if (short_stmt && std::regex_match(compact, index_import)) continue;

    if (compact == "Vbase=mpc.bus(1,BASE_KV)*1e3") {
      const Matrix& b = need(bus, "bus", st.line);
      if (b.empty() || b.front().size() <= kBaseKv) throw ParseError(st.line, "bus matrix lacks baseKV");
      vars["Vbase"] = b.front()[kBaseKv] * 1e3;
      continue;
    }
    if (compact == "Sbase=mpc.baseMVA*1e6") {
      if (!base_mva) throw ParseError(st.line, "mpc.baseMVA used before definition");
      vars["Sbase"] = *base_mva * 1e6;
      continue;
    }
    if (compact == "mpc.branch(:,[BR_RBR_X])=mpc.branch(:,[BR_RBR_X])/(Vbase^2/Sbase)") {
      const double vb = var("Vbase", st.line);
      const double zbase = vb * vb / var("Sbase", st.line);
      need(branch, "branch", st.line);
      for (auto& r : *branch) {
        r[kR] /= zbase;
        r[kX] /= zbase;
      }
      continue;
    }
    if (compact == "mpc.bus(:,[PD,QD])=mpc.bus(:,[PD,QD])/1e3") {
      need(bus, "bus", st.line);
      for (auto& r : *bus) {
        r[kPd] /= 1e3;
        r[kQd] /= 1e3;
      }
      continue;
    }
    if (compact == "mpc.bus(:,QD)=mpc.bus(:,PD)*sin(acos(pf))") {
      const double pf = var("pf", st.line);
      need(bus, "bus", st.line);
      for (auto& r : *bus) r[kQd] = r[kPd] * std::sin(std::acos(pf));
      continue;
    }
    if (compact == "mpc.bus(:,PD)=mpc.bus(:,PD)*pf") {
      const double pf = var("pf", st.line);
      need(bus, "bus", st.line);
      for (auto& r : *bus) r[kPd] *= pf;
      continue;
    }

    if (auto field = split_field_assignment(s)) {
      const auto& [name, value] = *field;
      if (name == "baseMVA") {
        auto v = parse_number(value);
        if (!v) throw ParseError(st.line, "mpc.baseMVA must be a number");
        base_mva = *v;
      } else if (name == "bus") {
        bus = parse_matrix(value, st.line, name);
        bus_line = st.line;
      } else if (name == "gen") {
        gen = parse_matrix(value, st.line, name);
        gen_line = st.line;
      } else if (name == "branch") {
        branch = parse_matrix(value, st.line, name);
        branch_line = st.line;
      } else if (name == "gencost" || name == "areas" || name == "bus_name") {
        // OPF data, not needed for power flow
        spdlog::debug("line {}: ignoring mpc.{}", st.line, name);
        if (warnings) warnings->push_back("line " + std::to_string(st.line) + ": ignoring mpc." + name);
      } else if (name != "version") {
        warn("line " + std::to_string(st.line) + ": ignoring mpc." + name);
      }
      continue;
    }
    if (short_stmt && std::regex_match(compact, m, scalar_assign)) {
      auto v = parse_number(m[2].str());
      if (!v) throw ParseError(st.line, "invalid number in assignment");
      vars[m[1]] = *v;
      continue;
    }
    warn("line " + std::to_string(st.line) + ": ignoring unsupported statement '" + compact.substr(0, 60) + "'");
  }

  if (!base_mva) throw ValidationError("case file does not define mpc.baseMVA");
  if (!bus) throw ValidationError("case file does not define mpc.bus");
  if (!gen) throw ValidationError("case file does not define mpc.gen");
  if (!branch) throw ValidationError("case file does not define mpc.branch");
  require_columns(*bus, 13, "bus", bus_line);
  require_columns(*gen, 8, "gen", gen_line);
  require_columns(*branch, 11, "branch", branch_line);

  NetworkCase net;
  net.base_mva = *base_mva;
  for (const auto& r : *bus) {
    Bus b;
    b.id = static_cast<int>(r[0]);
    switch (static_cast<int>(r[1])) {
      case 1:
        b.kind = BusKind::PQ;
        break;
      case 2:
        b.kind = BusKind::PV;
        break;
      case 3:
        b.kind = BusKind::Slack;
        break;
      default:
        throw ValidationError("bus " + std::to_string(b.id) + ": unsupported bus type " +
                              std::to_string(static_cast<int>(r[1])));
    }
    b.pd = r[2];
    b.qd = r[3];
    b.gs = r[4];
    b.bs = r[5];
    b.vm0 = r[7];
    b.va0 = r[8];
    b.vmax = r[11];
    b.vmin = r[12];
    net.buses.push_back(b);
  }
  for (const auto& r : *gen) {
    Generator g;
    g.bus = static_cast<int>(r[0]);
    g.pg = r[1];
    g.qg = r[2];
    g.vg = r[5];
    g.in_service = r[7] > 0.0;
    net.gens.push_back(g);
  }
  for (const auto& r : *branch) {
    Branch br;
    br.from = static_cast<int>(r[0]);
    br.to = static_cast<int>(r[1]);
    br.r = r[2];
    br.x = r[3];
    br.b_charge = r[4];
    br.tap = r[8];
    br.shift = r[9];
    br.in_service = r[10] > 0.0;
    net.branches.push_back(br);
  }
  validate_case(net);
  return net;
}

}  // namespace cpla
