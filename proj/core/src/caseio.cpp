#include "gridanneal/caseio.hpp"

#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gridanneal/errors.hpp"

namespace gridanneal {
namespace {

// ---------------------------------------------------------------------------
// MATPOWER subset parser
// ---------------------------------------------------------------------------

struct Token {
  enum Kind { Ident, Number, Symbol, End } kind = End;
  std::string text;
  double value = 0.0;
  int line = 0;
};

class Lexer {
 public:
  explicit Lexer(const std::string& text) : s_(text) {}

  Token next() {
    skip_space_and_comments();
    Token t;
    t.line = line_;
    if (pos_ >= s_.size()) {
      t.kind = Token::End;
      return t;
    }
    const char c = s_[pos_];
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos_;
      while (pos_ < s_.size() &&
             (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
              s_[pos_] == '_' || s_[pos_] == '.'))
        ++pos_;
      t.kind = Token::Ident;
      t.text = s_.substr(start, pos_ - start);
      return t;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '+' || c == '-' ||
        c == '.') {
      std::size_t start = pos_;
      ++pos_;
      while (pos_ < s_.size()) {
        const char d = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(d)) || d == '.') {
          ++pos_;
        } else if (d == 'e' || d == 'E') {
          ++pos_;
          if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
        } else {
          break;
        }
      }
      t.text = s_.substr(start, pos_ - start);
      try {
        t.value = std::stod(t.text);
      } catch (const std::exception&) {
        throw ParseError("line " + std::to_string(t.line) +
                         ": bad number '" + t.text + "'");
      }
      t.kind = Token::Number;
      return t;
    }
    t.kind = Token::Symbol;
    t.text = std::string(1, c);
    ++pos_;
    return t;
  }

  int line() const { return line_; }

 private:
  void skip_space_and_comments() {
    while (pos_ < s_.size()) {
      const char c = s_[pos_];
      if (c == '\n') {
        ++line_;
        ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else if (c == '%') {
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
      } else if (c == '.' && pos_ + 2 < s_.size() && s_[pos_ + 1] == '.' &&
                 s_[pos_ + 2] == '.') {
        // MATLAB line continuation: swallow to end of line without counting
        // it as a row break.
        pos_ += 3;
        while (pos_ < s_.size() && s_[pos_] != '\n') ++pos_;
        if (pos_ < s_.size()) {
          ++line_;
          ++pos_;
        }
      } else {
        break;
      }
    }
  }

  const std::string& s_;
  std::size_t pos_ = 0;
  int line_ = 1;
};

using Matrix = std::vector<std::vector<double>>;

struct RawCase {
  std::string name;
  double base_mva = 0.0;
  bool has_base = false;
  std::map<std::string, Matrix> matrices;
  std::map<std::string, int> first_line;
};

RawCase scan_matpower(const std::string& text) {
  Lexer lex(text);
  RawCase raw;
  Token t = lex.next();
  while (t.kind != Token::End) {
    if (t.kind == Token::Ident && t.text == "function") {
      // function mpc = <name>
      Token a = lex.next();
      Token eq = lex.next();
      if (eq.kind == Token::Symbol && eq.text == "=") {
        Token nm = lex.next();
        if (nm.kind == Token::Ident) raw.name = nm.text;
        t = lex.next();
        continue;
      }
      t = eq;
      continue;
    }
    if (t.kind == Token::Ident && t.text.rfind("mpc.", 0) == 0) {
      const std::string field = t.text.substr(4);
      const int decl_line = t.line;
      Token eq = lex.next();
      if (!(eq.kind == Token::Symbol && eq.text == "=")) {
        t = eq;
        continue;
      }
      Token v = lex.next();
      if (v.kind == Token::Number) {
        if (field == "baseMVA") {
          raw.base_mva = v.value;
          raw.has_base = true;
        }
        t = lex.next();
        continue;
      }
      if (v.kind == Token::Symbol && v.text == "[") {
        Matrix m;
        std::vector<double> row;
        int row_line = -1;
        for (;;) {
          Token e = lex.next();
          if (e.kind == Token::End)
            throw ParseError("line " + std::to_string(decl_line) +
                             ": unterminated matrix mpc." + field);
          if (e.kind == Token::Number) {
            if (row_line >= 0 && e.line != row_line && !row.empty()) {
              m.push_back(row);
              row.clear();
            }
            row_line = e.line;
            row.push_back(e.value);
          } else if (e.kind == Token::Symbol &&
                     (e.text == ";" || e.text == ",")) {
            if (e.text == ";" && !row.empty()) {
              m.push_back(row);
              row.clear();
              row_line = -1;
            }
          } else if (e.kind == Token::Symbol && e.text == "]") {
            if (!row.empty()) m.push_back(row);
            break;
          } else {
            throw ParseError("line " + std::to_string(e.line) +
                             ": unexpected token '" + e.text + "' in mpc." +
                             field);
          }
        }
        raw.matrices[field] = std::move(m);
        raw.first_line[field] = decl_line;
        t = lex.next();
        continue;
      }
      // Strings or other scalar assignments (e.g. mpc.version = '2')
      t = lex.next();
      continue;
    }
    t = lex.next();
  }
  return raw;
}

void require_cols(const Matrix& m, std::size_t cols, const std::string& name,
                  int line) {
  for (std::size_t r = 0; r < m.size(); ++r)
    if (m[r].size() < cols)
      throw ParseError("line " + std::to_string(line) + ": mpc." + name +
                       " row " + std::to_string(r + 1) + " has " +
                       std::to_string(m[r].size()) + " columns, need >= " +
                       std::to_string(cols));
}

}  // namespace

NetworkCase parse_matpower(const std::string& text) {
  RawCase raw = scan_matpower(text);
  if (!raw.has_base) throw ParseError("missing mpc.baseMVA");
  for (const char* need : {"bus", "gen", "branch"})
    if (!raw.matrices.count(need))
      throw ParseError(std::string("missing mandatory matrix mpc.") + need);

  NetworkCase net;
  net.name = raw.name.empty() ? "unnamed" : raw.name;
  net.mva_base = raw.base_mva;

  const Matrix& mbus = raw.matrices["bus"];
  const Matrix& mgen = raw.matrices["gen"];
  const Matrix& mbranch = raw.matrices["branch"];
  require_cols(mbus, 13, "bus", raw.first_line["bus"]);
  require_cols(mgen, 10, "gen", raw.first_line["gen"]);
  require_cols(mbranch, 11, "branch", raw.first_line["branch"]);

  std::map<int, int> ext_to_int;
  for (std::size_t r = 0; r < mbus.size(); ++r) {
    const std::vector<double>& row = mbus[r];
    Bus b;
    b.id = static_cast<int>(r);
    b.external_id = static_cast<int>(row[0]);
    const int type = static_cast<int>(row[1]);
    switch (type) {
      case 1: b.kind = BusKind::PQ; break;
      case 2: b.kind = BusKind::PV; break;
      case 3: b.kind = BusKind::Slack; break;
      default:
        throw ValidationError("bus " + std::to_string(b.external_id) +
                              ": unsupported bus type " + std::to_string(type));
    }
    b.p_demand = row[2];
    b.q_demand = row[3];
    b.g_shunt = row[4];
    b.b_shunt = row[5];
    b.v_set = row[7] > 0.0 ? row[7] : 1.0;
    b.v_max = row[11];
    b.v_min = row[12];
    if (!ext_to_int.emplace(b.external_id, b.id).second)
      throw ValidationError("duplicate bus id " +
                            std::to_string(b.external_id));
    net.buses.push_back(b);
  }

  auto lookup = [&](double ext, const std::string& what) {
    auto it = ext_to_int.find(static_cast<int>(ext));
    if (it == ext_to_int.end())
      throw ValidationError(what + " references unknown bus " +
                            std::to_string(static_cast<int>(ext)));
    return it->second;
  };

  // Costs are attached to gen rows before dropping out-of-service units.
  std::vector<std::array<double, 3>> costs(mgen.size(), {0.0, 0.0, 0.0});
  if (raw.matrices.count("gencost")) {
    const Matrix& mc = raw.matrices["gencost"];
    require_cols(mc, 4, "gencost", raw.first_line["gencost"]);
    if (mc.size() != mgen.size() && mc.size() != 2 * mgen.size())
      throw ParseError("mpc.gencost has " + std::to_string(mc.size()) +
                       " rows for " + std::to_string(mgen.size()) +
                       " generators");
    for (std::size_t r = 0; r < mgen.size(); ++r) {
      const std::vector<double>& row = mc[r];
      const int model = static_cast<int>(row[0]);
      if (model != 2)
        throw ParseError("mpc.gencost row " + std::to_string(r + 1) +
                         ": unsupported cost model " + std::to_string(model) +
                         " (only polynomial model 2)");
      const int ncost = static_cast<int>(row[3]);
      if (ncost < 0 || ncost > 3)
        throw ParseError("mpc.gencost row " + std::to_string(r + 1) +
                         ": polynomial degree above quadratic unsupported");
      if (row.size() < static_cast<std::size_t>(4 + ncost))
        throw ParseError("mpc.gencost row " + std::to_string(r + 1) +
                         ": missing coefficients");
      // Coefficients arrive highest order first; store as (c2, c1, c0).
      std::array<double, 3> c{0.0, 0.0, 0.0};
      for (int k = 0; k < ncost; ++k) c[3 - ncost + k] = row[4 + k];
      costs[r] = c;
    }
  }

  for (std::size_t r = 0; r < mgen.size(); ++r) {
    const std::vector<double>& row = mgen[r];
    if (static_cast<int>(row[7]) == 0) continue;  // out of service
    Generator g;
    g.bus = lookup(row[0], "generator " + std::to_string(r + 1));
    g.p_out = row[1];
    g.q_out = row[2];
    g.q_max = row[3];
    g.q_min = row[4];
    g.p_max = row[8];
    g.p_min = row[9];
    g.cost_coeffs = costs[r];
    if (row[5] > 0.0) net.buses[g.bus].v_set = row[5];  // VG column
    net.generators.push_back(g);
  }

  std::map<std::pair<int, int>, int> circuit_count;
  for (std::size_t r = 0; r < mbranch.size(); ++r) {
    const std::vector<double>& row = mbranch[r];
    if (static_cast<int>(row[10]) == 0) continue;  // out of service
    Branch br;
    br.from = lookup(row[0], "branch " + std::to_string(r + 1));
    br.to = lookup(row[1], "branch " + std::to_string(r + 1));
    br.r = row[2];
    br.x = row[3];
    br.b_shunt = row[4];
    br.tap_ratio = row[8] > 0.0 ? row[8] : 1.0;
    if (row[9] != 0.0)
      throw ValidationError("branch " + std::to_string(r + 1) +
                            ": phase-shifting transformers unsupported");
    br.circuit = circuit_count[{br.from, br.to}]++;
    net.branches.push_back(br);
  }

  validate(net);
  return net;
}

// ---------------------------------------------------------------------------
// gridcase-v1 JSON
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

double get_num(const json& j, const char* key, const std::string& path) {
  if (!j.contains(key) || !j[key].is_number())
    throw ParseError(path + "." + key + ": missing or non-numeric");
  return j[key].get<double>();
}

double get_num_or(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) throw ParseError(std::string(key) + ": non-numeric");
  return j[key].get<double>();
}

}  // namespace

NetworkCase load_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("JSON parse error: ") + e.what());
  }
  if (!j.is_object() || !j.contains("schema") || !j["schema"].is_string())
    throw ParseError("$.schema: missing");
  if (j["schema"].get<std::string>() != "gridcase-v1")
    throw ParseError("$.schema: unsupported schema '" +
                     j["schema"].get<std::string>() + "'");

  NetworkCase net;
  net.name = j.value("name", std::string("unnamed"));
  net.mva_base = get_num(j, "mva_base", "$");

  if (!j.contains("buses") || !j["buses"].is_array())
    throw ParseError("$.buses: missing array");
  std::map<int, int> ext_to_int;
  for (std::size_t i = 0; i < j["buses"].size(); ++i) {
    const json& jb = j["buses"][i];
    const std::string path = "$.buses[" + std::to_string(i) + "]";
    Bus b;
    b.id = static_cast<int>(i);
    b.external_id = static_cast<int>(get_num(jb, "id", path));
    if (!jb.contains("kind") || !jb["kind"].is_string())
      throw ParseError(path + ".kind: missing");
    const std::string kind = jb["kind"].get<std::string>();
    if (kind == "slack") b.kind = BusKind::Slack;
    else if (kind == "pv") b.kind = BusKind::PV;
    else if (kind == "pq") b.kind = BusKind::PQ;
    else throw ParseError(path + ".kind: unknown kind '" + kind + "'");
    b.p_demand = get_num_or(jb, "p_demand", 0.0);
    b.q_demand = get_num_or(jb, "q_demand", 0.0);
    b.v_set = get_num_or(jb, "v_set", 1.0);
    b.v_min = get_num_or(jb, "v_min", 0.9);
    b.v_max = get_num_or(jb, "v_max", 1.1);
    b.delta_min = get_num_or(jb, "delta_min", -180.0);
    b.delta_max = get_num_or(jb, "delta_max", 180.0);
    b.g_shunt = get_num_or(jb, "g_shunt", 0.0);
    b.b_shunt = get_num_or(jb, "b_shunt", 0.0);
    if (!ext_to_int.emplace(b.external_id, b.id).second)
      throw ParseError(path + ".id: duplicate bus id " +
                       std::to_string(b.external_id));
    net.buses.push_back(b);
  }

  auto lookup = [&](int ext, const std::string& path) {
    auto it = ext_to_int.find(ext);
    if (it == ext_to_int.end())
      throw ParseError(path + ": unknown bus id " + std::to_string(ext));
    return it->second;
  };

  if (j.contains("branches")) {
    if (!j["branches"].is_array()) throw ParseError("$.branches: not an array");
    for (std::size_t i = 0; i < j["branches"].size(); ++i) {
      const json& jb = j["branches"][i];
      const std::string path = "$.branches[" + std::to_string(i) + "]";
      Branch br;
      br.from = lookup(static_cast<int>(get_num(jb, "from", path)), path + ".from");
      br.to = lookup(static_cast<int>(get_num(jb, "to", path)), path + ".to");
      br.r = get_num_or(jb, "r", 0.0);
      br.x = get_num(jb, "x", path);
      br.b_shunt = get_num_or(jb, "b_shunt", 0.0);
      br.tap_ratio = get_num_or(jb, "tap_ratio", 1.0);
      br.circuit = static_cast<int>(get_num_or(jb, "circuit", 0.0));
      net.branches.push_back(br);
    }
  }

  if (j.contains("generators")) {
    if (!j["generators"].is_array())
      throw ParseError("$.generators: not an array");
    for (std::size_t i = 0; i < j["generators"].size(); ++i) {
      const json& jg = j["generators"][i];
      const std::string path = "$.generators[" + std::to_string(i) + "]";
      Generator g;
      g.bus = lookup(static_cast<int>(get_num(jg, "bus", path)), path + ".bus");
      g.p_out = get_num_or(jg, "p_out", 0.0);
      g.q_out = get_num_or(jg, "q_out", 0.0);
      g.p_min = get_num_or(jg, "p_min", 0.0);
      g.p_max = get_num_or(jg, "p_max", 0.0);
      g.q_min = get_num_or(jg, "q_min", 0.0);
      g.q_max = get_num_or(jg, "q_max", 0.0);
      if (jg.contains("cost_coeffs")) {
        const json& jc = jg["cost_coeffs"];
        if (!jc.is_array() || jc.size() != 3)
          throw ParseError(path + ".cost_coeffs: need [c2, c1, c0]");
        for (int k = 0; k < 3; ++k) {
          if (!jc[k].is_number())
            throw ParseError(path + ".cost_coeffs[" + std::to_string(k) +
                             "]: non-numeric");
          g.cost_coeffs[k] = jc[k].get<double>();
        }
      }
      net.generators.push_back(g);
    }
  }

  validate(net);
  return net;
}

std::string save_json(const NetworkCase& net) {
  json j;
  j["schema"] = "gridcase-v1";
  j["name"] = net.name;
  j["mva_base"] = net.mva_base;
  j["buses"] = json::array();
  for (const Bus& b : net.buses) {
    json jb;
    jb["id"] = b.external_id;
    jb["kind"] = b.kind == BusKind::Slack ? "slack"
                 : b.kind == BusKind::PV  ? "pv"
                                          : "pq";
    jb["p_demand"] = b.p_demand;
    jb["q_demand"] = b.q_demand;
    jb["v_set"] = b.v_set;
    jb["v_min"] = b.v_min;
    jb["v_max"] = b.v_max;
    jb["delta_min"] = b.delta_min;
    jb["delta_max"] = b.delta_max;
    jb["g_shunt"] = b.g_shunt;
    jb["b_shunt"] = b.b_shunt;
    j["buses"].push_back(jb);
  }
  j["branches"] = json::array();
  for (const Branch& br : net.branches) {
    json jb;
    jb["from"] = net.buses[br.from].external_id;
    jb["to"] = net.buses[br.to].external_id;
    jb["r"] = br.r;
    jb["x"] = br.x;
    jb["b_shunt"] = br.b_shunt;
    jb["tap_ratio"] = br.tap_ratio;
    jb["circuit"] = br.circuit;
    j["branches"].push_back(jb);
  }
  j["generators"] = json::array();
  for (const Generator& g : net.generators) {
    json jg;
    jg["bus"] = net.buses[g.bus].external_id;
    jg["p_out"] = g.p_out;
    jg["q_out"] = g.q_out;
    jg["p_min"] = g.p_min;
    jg["p_max"] = g.p_max;
    jg["q_min"] = g.q_min;
    jg["q_max"] = g.q_max;
    jg["cost_coeffs"] = {g.cost_coeffs[0], g.cost_coeffs[1], g.cost_coeffs[2]};
    j["generators"].push_back(jg);
  }
  return j.dump(2) + "\n";
}

NetworkCase load_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open case file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".json")
    return load_json(ss.str());
  if (path.size() >= 2 && path.substr(path.size() - 2) == ".m")
    return parse_matpower(ss.str());
  throw ParseError("unknown case file extension: " + path);
}

void save_case_file(const NetworkCase& net, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write case file: " + path);
  out << save_json(net);
}

NetworkCase apply_perturbation(const NetworkCase& net,
                               const PerturbationSpec& spec) {
  if (!(spec.factor > 0.0))
    throw ValidationError("perturbation factor must be positive");
  NetworkCase out = net;

  char suffix[64];
  if (spec.mode == PerturbationMode::LoadScale) {
    std::snprintf(suffix, sizeof(suffix), "_loadx%g", spec.factor);
    std::vector<int> targets;
    if (spec.buses.empty()) {
      for (const Bus& b : out.buses)
        if (b.kind == BusKind::PQ) targets.push_back(b.id);
    } else {
      for (int ext : spec.buses) {
        const int id = out.internal_id(ext);
        if (id < 0)
          throw ValidationError("load scaling names unknown bus " +
                                std::to_string(ext));
        if (out.buses[id].kind == BusKind::Slack)
          throw ValidationError("load scaling may not name the slack bus (" +
                                std::to_string(ext) + ")");
        targets.push_back(id);
      }
    }
    for (int id : targets) {
      out.buses[id].p_demand *= spec.factor;
      out.buses[id].q_demand *= spec.factor;
    }
  } else {
    std::snprintf(suffix, sizeof(suffix), "_rx%g", spec.factor);
    std::vector<int> targets = spec.branches;
    if (targets.empty()) {
      targets.resize(out.branches.size());
      for (std::size_t i = 0; i < targets.size(); ++i)
        targets[i] = static_cast<int>(i);
    }
    for (int idx : targets) {
      if (idx < 0 || idx >= static_cast<int>(out.branches.size()))
        throw ValidationError("resistance scaling names unknown branch " +
                              std::to_string(idx));
      out.branches[idx].r *= spec.factor;
    }
  }
  out.name += suffix;
  validate(out);
  return out;
}

}  // namespace gridanneal
