#pragma once

// JSON serialization of polynomials and problem files.
//
// Polynomial: {"vars": ["t","x1","u1"], "terms": [{"exp": [0,2,0], "coef": 1.0}, ...]}
// Problem: modes/edges/x0/horizon/relaxation_defaults/notes, see load_problem.

#include <fstream>

#include <json.hpp>

#include "hocp/model.hpp"

namespace hocp {

using nlohmann::json;

inline json poly_to_json(const Polynomial& p) {
  json terms = json::array();
  for (const auto& [e, c] : p.terms) terms.push_back({{"exp", e}, {"coef", c}});
  return json{{"vars", p.space.names}, {"terms", std::move(terms)}};
}

// Parses a polynomial that must live in `space`; the file's variable list has
// to match the expected names in order.
inline Polynomial poly_from_json(const json& j, const VarSpace& space, const std::string& what) {
  if (!j.is_object() || !j.contains("vars") || !j.contains("terms"))
    throw Error(what + ": polynomial needs \"vars\" and \"terms\"");
  const auto vars = j.at("vars").get<std::vector<std::string>>();
  if (vars != space.names) {
    std::string want;
    for (const auto& n : space.names) want += (want.empty() ? "" : ",") + n;
    std::string got;
    for (const auto& n : vars) got += (got.empty() ? "" : ",") + n;
    throw Error(what + ": polynomial variables [" + got + "] do not match expected [" + want + "]");
  }
  Polynomial p(space);
  for (const auto& t : j.at("terms")) {
    const auto e = t.at("exp").get<Expo>();
    if (static_cast<int>(e.size()) != space.dim())
      throw Error(what + ": exponent tuple length does not match variable count");
    for (int v : e)
      if (v < 0) throw Error(what + ": negative exponent");
    const double c = t.at("coef").get<double>();
    if (c == 0.0) continue;
    if (!p.terms.emplace(e, c).second) throw Error(what + ": duplicate exponent tuple");
  }
  return p;
}

inline json set_to_json(const SemialgebraicSet& s) {
  json j = json::object();
  json ineq = json::array(), eq = json::array();
  for (const auto& q : s.ineq) ineq.push_back(poly_to_json(q));
  for (const auto& q : s.eq) eq.push_back(poly_to_json(q));
  j["ineq"] = std::move(ineq);
  j["eq"] = std::move(eq);
  return j;
}

inline SemialgebraicSet set_from_json(const json& j, const VarSpace& space, const std::string& what) {
  SemialgebraicSet s;
  if (j.is_null()) return s;
  if (j.contains("ineq"))
    for (const auto& q : j.at("ineq")) s.ineq.push_back(poly_from_json(q, space, what));
  if (j.contains("eq"))
    for (const auto& q : j.at("eq")) s.eq.push_back(poly_from_json(q, space, what));
  return s;
}

inline json problem_to_json(const HybridProblem& p) {
  json jm = json::array();
  for (const auto& m : p.modes) {
    json o;
    o["id"] = m.id;
    o["state_vars"] = m.state_vars;
    o["control_vars"] = m.control_vars;
    o["control_box"] = m.control_box;
    json dyn = json::array();
    for (const auto& f : m.dynamics) dyn.push_back(poly_to_json(f));
    o["dynamics"] = std::move(dyn);
    o["domain"] = set_to_json(m.domain);
    if (m.target) o["target"] = set_to_json(*m.target);
    o["running_cost"] = poly_to_json(m.running_cost);
    o["terminal_cost"] = poly_to_json(m.terminal_cost);
    if (!m.scale_box.empty()) o["scale_box"] = m.scale_box;
    jm.push_back(std::move(o));
  }
  json je = json::array();
  for (const auto& e : p.edges) {
    json o;
    o["from"] = e.from;
    o["to"] = e.to;
    o["guard"] = set_to_json(e.guard);
    json rs = json::array();
    for (const auto& r : e.reset) rs.push_back(poly_to_json(r));
    o["reset"] = std::move(rs);
    je.push_back(std::move(o));
  }
  json j;
  if (!p.name.empty()) j["name"] = p.name;
  j["modes"] = std::move(jm);
  j["edges"] = std::move(je);
  j["x0"] = json{{"mode", p.x0_mode}, {"state", p.x0}};
  j["horizon"] = p.horizon.free ? json{{"free", p.horizon.T}} : json{{"fixed", p.horizon.T}};
  j["relaxation_defaults"] = json{{"order_2k", p.default_order}};
  if (!p.notes.empty()) j["notes"] = p.notes;
  return j;
}

inline HybridProblem problem_from_json(const json& j) {
  HybridProblem p;
  p.name = j.value("name", "");
  p.notes = j.value("notes", "");
  if (!j.contains("modes") || !j.at("modes").is_array() || j.at("modes").empty())
    throw Error("problem needs a non-empty \"modes\" array");
  for (const auto& o : j.at("modes")) {
    Mode m;
    m.id = o.at("id").is_string() ? o.at("id").get<std::string>() : std::to_string(o.at("id").get<int>());
    m.state_vars = o.at("state_vars").get<std::vector<std::string>>();
    if (o.contains("control_box")) m.control_box = o.at("control_box").get<std::vector<std::array<double, 2>>>();
    if (o.contains("control_vars")) {
      m.control_vars = o.at("control_vars").get<std::vector<std::string>>();
    } else {
      for (std::size_t i = 0; i < m.control_box.size(); ++i)
        m.control_vars.push_back("u" + std::to_string(i + 1));
    }
    const std::string tag = "mode " + m.id;
    VarSpace flow, st;
    try {
      flow = m.flow_space();
      st = m.state_space();
    } catch (const Error& e) {
      throw Error(tag + ": " + e.what());
    }
    for (const auto& f : o.at("dynamics")) m.dynamics.push_back(poly_from_json(f, flow, tag + " dynamics"));
    m.domain = set_from_json(o.value("domain", json()), st, tag + " domain");
    if (o.contains("target") && !o.at("target").is_null())
      m.target = set_from_json(o.at("target"), st, tag + " target");
    m.running_cost = o.contains("running_cost") ? poly_from_json(o.at("running_cost"), flow, tag + " running cost")
                                                : Polynomial::constant(flow, 0.0);
    m.terminal_cost = o.contains("terminal_cost")
                          ? poly_from_json(o.at("terminal_cost"), st, tag + " terminal cost")
                          : Polynomial::constant(st, 0.0);
    if (o.contains("scale_box")) m.scale_box = o.at("scale_box").get<std::vector<std::array<double, 2>>>();
    p.modes.push_back(std::move(m));
  }
  if (j.contains("edges")) {
    for (const auto& o : j.at("edges")) {
      Edge e;
      e.from = o.at("from").is_string() ? o.at("from").get<std::string>() : std::to_string(o.at("from").get<int>());
      e.to = o.at("to").is_string() ? o.at("to").get<std::string>() : std::to_string(o.at("to").get<int>());
      const int si = p.mode_index(e.from), ti = p.mode_index(e.to);
      if (si < 0 || ti < 0) throw Error("edge " + e.from + "->" + e.to + ": unknown mode id");
      const std::string tag = "edge " + e.from + "->" + e.to;
      const VarSpace src = p.modes[si].state_space();
      e.guard = set_from_json(o.at("guard"), src, tag + " guard");
      for (const auto& r : o.at("reset")) e.reset.push_back(poly_from_json(r, src, tag + " reset"));
      p.edges.push_back(std::move(e));
    }
  }
  const auto& jx = j.at("x0");
  p.x0_mode = jx.at("mode").is_string() ? jx.at("mode").get<std::string>() : std::to_string(jx.at("mode").get<int>());
  p.x0 = jx.at("state").get<std::vector<double>>();
  const auto& jh = j.at("horizon");
  if (jh.contains("fixed")) {
    p.horizon = {false, jh.at("fixed").get<double>()};
  } else if (jh.contains("free")) {
    p.horizon = {true, jh.at("free").get<double>()};
  } else {
    throw Error("horizon must be {\"fixed\": T} or {\"free\": T}");
  }
  if (j.contains("relaxation_defaults"))
    p.default_order = j.at("relaxation_defaults").value("order_2k", 4);
  return p;
}

// Loads a problem file and validates it; throws with the collected messages
// if any validation error is present.
inline HybridProblem load_problem(const std::string& path, std::uint32_t seed = 0) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open problem file " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("problem file " + path + " is not valid JSON: " + e.what());
  }
  HybridProblem p = problem_from_json(j);
  const auto ds = validate(p, seed);
  if (has_errors(ds)) {
    std::string msg = "problem file " + path + " failed validation:";
    for (const auto& d : ds)
      if (d.severity == Severity::Error) msg += "\n  [" + d.code + "] " + d.message;
    throw Error(msg);
  }
  return p;
}

inline void save_problem(const HybridProblem& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write problem file " + path);
  out << problem_to_json(p).dump(2) << "\n";
}

}  // namespace hocp
