#pragma once

// Pipeline orchestration and result reporting: run the
// relax -> solve -> extract -> simulate chain across relaxation orders
// (optionally in parallel), aggregate per-order outcomes into a report, and
// serialize the artifacts — solution, controller, trajectory, report — as
// JSON, CSV, and an aligned text table.

#include <atomic>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <optional>
#include <sstream>
#include <thread>

#include "hocp/json_io.hpp"
#include "hocp/relax.hpp"
#include "hocp/sdp.hpp"
#include "hocp/sim.hpp"

namespace hocp {

struct PipelineOptions {
  RelaxOptions relax;
  SolveOptions solve;
};

struct OrderResult {
  int order_2k = 0;
  std::string status = "NotSolved";
  double p_k = std::numeric_limits<double>::quiet_NaN();
  double d_k = std::numeric_limits<double>::quiet_NaN();
  double sim_cost = std::numeric_limits<double>::quiet_NaN();
  double solve_seconds = 0.0;
  int iterations = 0;
  std::vector<std::string> sequence;  // mode ids in visit order
  std::string terminal_reason;
  std::string error;  // "<stage>: <message>" of the first failed stage
};

struct RunReport {
  std::string problem;
  std::optional<double> reference;
  std::vector<OrderResult> orders;
};

// The benchmark problem files carry "... reference cost <value> ..." in
// their notes; pick the value up for the report when present.
inline std::optional<double> reference_from_notes(const std::string& notes) {
  const std::string key = "reference cost ";
  const auto pos = notes.find(key);
  if (pos == std::string::npos) return std::nullopt;
  try {
    return std::stod(notes.substr(pos + key.size()));
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

struct OrderArtifacts {
  ConicSolution sol;
  json sol_json;  // measure-keyed solution file content (needs the relaxation)
  PolyController controller;
  HybridTrajectory traj;
  bool solved = false, extracted = false, simulated = false;
};

json solution_to_json(const ConicSolution& sol, const Relaxation& rx, const std::string& source);

inline OrderResult run_order(const HybridProblem& p, int order_2k, const PipelineOptions& po,
                             OrderArtifacts* art = nullptr, const std::string& source = "") {
  OrderResult r;
  r.order_2k = order_2k;
  std::string stage = "relax";
  try {
    const Relaxation rx = build_relaxation(p, order_2k, po.relax);
    stage = "solve";
    const ConicProgram cp = to_conic(rx);
    const auto t0 = std::chrono::steady_clock::now();
    ConicSolution sol = solve(cp, po.solve);
    r.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    r.status = to_string(sol.status);
    r.p_k = sol.p_k;
    r.d_k = sol.d_k;
    r.iterations = sol.iterations;
    if (art) {
      art->sol = sol;
      art->sol_json = solution_to_json(sol, rx, source.empty() ? p.name : source);
      art->solved = true;
    }
    if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::NearOptimal) {
      r.error = "solve: status " + std::string(to_string(sol.status)) +
                (sol.message.empty() ? "" : " (" + sol.message + ")");
      return r;
    }
    stage = "extract";
    const PolyController pc = extract_controller(sol, rx);
    if (art) {
      art->controller = pc;
      art->extracted = true;
    }
    stage = "simulate";
    const HybridTrajectory traj = execute(p, pc);
    if (art) {
      art->traj = traj;
      art->simulated = true;
    }
    r.sim_cost = traj.cost;
    r.terminal_reason = to_string(traj.reason);
    for (const int mi : traj.mode_sequence()) r.sequence.push_back(p.modes[mi].id);
  } catch (const std::exception& e) {
    r.error = stage + ": " + e.what();
  }
  return r;
}

// Runs every order; failures are recorded per order and never abort the
// remaining ones. `jobs > 1` processes orders concurrently.
inline RunReport run_orders(const HybridProblem& p, const std::vector<int>& orders,
                            const PipelineOptions& po, int jobs = 1,
                            std::vector<OrderArtifacts>* arts = nullptr,
                            const std::string& source = "") {
  RunReport rep;
  rep.problem = p.name.empty() ? "problem" : p.name;
  rep.reference = reference_from_notes(p.notes);
  rep.orders.resize(orders.size());
  if (arts) {
    arts->clear();
    arts->resize(orders.size());
  }
  const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(orders.size())));
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= orders.size()) break;
      rep.orders[i] = run_order(p, orders[i], po, arts ? &(*arts)[i] : nullptr, source);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Report rendering

inline json report_to_json(const RunReport& r) {
  json jo = json::array();
  for (const auto& o : r.orders) {
    json e{{"order_2k", o.order_2k},
           {"status", o.status},
           {"iterations", o.iterations},
           {"solve_seconds", o.solve_seconds}};
    if (!std::isnan(o.p_k)) {
      e["p_k"] = o.p_k;
      e["d_k"] = o.d_k;
    }
    if (!std::isnan(o.sim_cost)) {
      e["sim_cost"] = o.sim_cost;
      e["terminal"] = o.terminal_reason;
      e["sequence"] = o.sequence;
    }
    if (!o.error.empty()) e["error"] = o.error;
    jo.push_back(std::move(e));
  }
  json j{{"problem", r.problem}, {"orders", std::move(jo)}};
  if (r.reference) j["reference"] = *r.reference;
  return j;
}

inline RunReport report_from_json(const json& j) {
  RunReport r;
  r.problem = j.value("problem", "");
  if (j.contains("reference")) r.reference = j.at("reference").get<double>();
  for (const auto& e : j.value("orders", json::array())) {
    OrderResult o;
    o.order_2k = e.at("order_2k").get<int>();
    o.status = e.value("status", "NotSolved");
    o.iterations = e.value("iterations", 0);
    o.solve_seconds = e.value("solve_seconds", 0.0);
    o.p_k = e.value("p_k", std::numeric_limits<double>::quiet_NaN());
    o.d_k = e.value("d_k", std::numeric_limits<double>::quiet_NaN());
    o.sim_cost = e.value("sim_cost", std::numeric_limits<double>::quiet_NaN());
    o.terminal_reason = e.value("terminal", "");
    if (e.contains("sequence")) o.sequence = e.at("sequence").get<std::vector<std::string>>();
    o.error = e.value("error", "");
    r.orders.push_back(std::move(o));
  }
  return r;
}

namespace detail {

inline std::string fmt_num(double v, int prec = 6) {
  if (std::isnan(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

inline std::string fmt_g(double v) {
  if (std::isnan(v)) return "";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string join_sequence(const std::vector<std::string>& seq) {
  if (seq.empty()) return "-";
  std::string s;
  for (const auto& id : seq) s += (s.empty() ? "" : "->") + id;
  return s;
}

}  // namespace detail

// Aligned text table with one row per order.
inline std::string report_table(const RunReport& r) {
  std::vector<std::array<std::string, 8>> rows;
  rows.push_back({"order", "p_k", "d_k", "sim", "time_s", "iters", "status", "transitions"});
  for (const auto& o : r.orders) {
    rows.push_back({std::to_string(o.order_2k), detail::fmt_num(o.p_k), detail::fmt_num(o.d_k),
                    detail::fmt_num(o.sim_cost), detail::fmt_num(o.solve_seconds, 2),
                    std::to_string(o.iterations), o.status, detail::join_sequence(o.sequence)});
  }
  std::array<std::size_t, 8> w{};
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) w[c] = std::max(w[c], row[c].size());
  std::ostringstream os;
  os << "problem: " << r.problem;
  if (r.reference) os << "  (reference " << detail::fmt_num(*r.reference, 4) << ")";
  os << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c)
      os << std::left << std::setw(static_cast<int>(w[c]) + 2) << row[c];
    os << "\n";
  }
  for (const auto& o : r.orders)
    if (!o.error.empty()) os << "order " << o.order_2k << " failed at " << o.error << "\n";
  return os.str();
}

// CSV twin of the table.
inline std::string report_csv(const RunReport& r) {
  std::ostringstream os;
  os << "problem,order_2k,p_k,d_k,sim_cost,solve_seconds,iterations,status,transitions,reference\n";
  for (const auto& o : r.orders) {
    os << r.problem << "," << o.order_2k << "," << detail::fmt_g(o.p_k) << ","
       << detail::fmt_g(o.d_k) << "," << detail::fmt_g(o.sim_cost) << ","
       << detail::fmt_g(o.solve_seconds) << "," << o.iterations << "," << o.status << ",";
    const auto seq = detail::join_sequence(o.sequence);
    os << (seq == "-" ? "" : seq) << ",";
    os << (r.reference ? detail::fmt_g(*r.reference) : "") << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Artifact serialization

inline json controller_to_json(const PolyController& pc) {
  json jm = json::array();
  for (const auto& mc : pc.modes) {
    json ch = json::array();
    for (const auto& c : mc.channels) ch.push_back(poly_to_json(c));
    jm.push_back(json{{"mode", mc.mode_id},
                      {"channels", std::move(ch)},
                      {"saturation", mc.saturation}});
  }
  return json{{"order_2k", pc.order_2k}, {"modes", std::move(jm)}};
}

// Channel polynomials live over each mode's (t, x) space, which is
// reconstructed from the problem the controller belongs to.
inline PolyController controller_from_json(const json& j, const HybridProblem& p) {
  PolyController pc;
  pc.order_2k = j.value("order_2k", 0);
  const auto& jm = j.at("modes");
  if (jm.size() != p.modes.size())
    throw Error("controller file has " + std::to_string(jm.size()) + " modes, problem has " +
                std::to_string(p.modes.size()));
  for (const auto& e : jm) {
    const std::string id = e.at("mode").get<std::string>();
    const int mi = p.mode_index(id);
    if (mi < 0) throw Error("controller mode " + id + " is not in the problem");
    const Mode& m = p.modes[mi];
    ModeController mc;
    mc.mode_id = id;
    mc.space = m.timed_state_space();
    for (const auto& cj : e.at("channels"))
      mc.channels.push_back(poly_from_json(cj, mc.space, "controller mode " + id));
    mc.saturation = e.at("saturation").get<std::vector<std::array<double, 2>>>();
    if (mc.channels.size() != static_cast<std::size_t>(m.control_dim()) ||
        mc.saturation.size() != mc.channels.size())
      throw Error("controller mode " + id + " channel count does not match the problem");
    pc.modes.push_back(std::move(mc));
  }
  // order by problem mode index
  std::vector<ModeController> ordered(p.modes.size());
  for (auto& mc : pc.modes) ordered[p.mode_index(mc.mode_id)] = std::move(mc);
  pc.modes = std::move(ordered);
  return pc;
}

// Solution files carry the moment vector keyed by measure plus everything
// needed to rebuild the relaxation the moments index into (problem source,
// order, relaxation options), so `extract` can run from the file alone.
inline json solution_to_json(const ConicSolution& sol, const Relaxation& rx,
                             const std::string& source) {
  json jms = json::array();
  for (std::size_t mi = 0; mi < rx.measures.size(); ++mi) {
    const double* seg = sol.y.data() + rx.offset[mi];
    jms.push_back(json{{"name", rx.measures[mi].name},
                       {"kind", to_string(rx.measures[mi].kind)},
                       {"dim", rx.measures[mi].space.dim()},
                       {"moments", std::vector<double>(seg, seg + rx.length[mi])}});
  }
  json jlog = json::array();
  for (const auto& it : sol.log)
    jlog.push_back(json{{"iter", it.iter},
                        {"primal_obj", it.primal_obj},
                        {"dual_obj", it.dual_obj},
                        {"gap", it.gap},
                        {"primal_res", it.primal_res},
                        {"dual_res", it.dual_res},
                        {"step", it.step}});
  return json{{"problem", rx.problem.name},
              {"source", source},
              {"order_2k", rx.order_2k},
              {"options", json{{"scale", rx.options.scale}, {"bound", rx.options.bound}}},
              {"status", to_string(sol.status)},
              {"p_k", sol.p_k},
              {"d_k", sol.d_k},
              {"gap", sol.gap},
              {"primal_res", sol.primal_res},
              {"dual_res", sol.dual_res},
              {"iterations", sol.iterations},
              {"message", sol.message},
              {"measures", std::move(jms)},
              {"log", std::move(jlog)}};
}

// A parsed solution file: the solver outcome plus the relaxation identity the
// per-measure moments belong to.
struct SolutionFile {
  std::string problem;  // display name
  std::string source;   // problem file path or built-in name, for reloading
  int order_2k = 0;
  RelaxOptions options;
  ConicSolution sol;  // y left empty until bound to a relaxation
  struct MeasureMoments {
    std::string name;
    std::vector<double> moments;
  };
  std::vector<MeasureMoments> measures;
};

inline SolveStatus status_from_string(const std::string& s) {
  for (const SolveStatus v : {SolveStatus::Optimal, SolveStatus::NearOptimal,
                              SolveStatus::Infeasible, SolveStatus::Unbounded,
                              SolveStatus::Stalled})
    if (s == to_string(v)) return v;
  throw Error("unknown solve status \"" + s + "\" in solution file");
}

inline SolutionFile solution_from_json(const json& j) {
  SolutionFile sf;
  sf.problem = j.value("problem", "");
  sf.source = j.value("source", "");
  sf.order_2k = j.at("order_2k").get<int>();
  if (j.contains("options")) {
    sf.options.scale = j.at("options").value("scale", true);
    sf.options.bound = j.at("options").value("bound", 0.0);
  }
  sf.sol.status = status_from_string(j.at("status").get<std::string>());
  sf.sol.p_k = j.value("p_k", 0.0);
  sf.sol.d_k = j.value("d_k", 0.0);
  sf.sol.gap = j.value("gap", 0.0);
  sf.sol.primal_res = j.value("primal_res", 0.0);
  sf.sol.dual_res = j.value("dual_res", 0.0);
  sf.sol.iterations = j.value("iterations", 0);
  sf.sol.message = j.value("message", "");
  for (const auto& e : j.at("measures")) {
    SolutionFile::MeasureMoments mm;
    mm.name = e.at("name").get<std::string>();
    mm.moments = e.at("moments").get<std::vector<double>>();
    sf.measures.push_back(std::move(mm));
  }
  return sf;
}

// Reassemble the global moment vector of `sf` against a freshly built
// relaxation, checking that measure names and lengths line up (they will not
// if the problem file changed since the solution was written).
inline ConicSolution solution_for_relaxation(const SolutionFile& sf, const Relaxation& rx) {
  if (sf.order_2k != rx.order_2k)
    throw Error("solution file is order " + std::to_string(sf.order_2k) +
                " but the relaxation is order " + std::to_string(rx.order_2k));
  if (sf.measures.size() != rx.measures.size())
    throw Error("solution file has " + std::to_string(sf.measures.size()) +
                " measures, the relaxation has " + std::to_string(rx.measures.size()) +
                "; the problem likely changed since the solution was written");
  ConicSolution sol = sf.sol;
  sol.y = Eigen::VectorXd::Zero(rx.total_len);
  for (std::size_t mi = 0; mi < rx.measures.size(); ++mi) {
    const auto& mm = sf.measures[mi];
    if (mm.name != rx.measures[mi].name ||
        mm.moments.size() != static_cast<std::size_t>(rx.length[mi]))
      throw Error("solution file measure \"" + mm.name + "\" (" +
                  std::to_string(mm.moments.size()) + " moments) does not match relaxation "
                  "measure \"" + rx.measures[mi].name + "\" (" +
                  std::to_string(rx.length[mi]) + " moments)");
    for (int i = 0; i < rx.length[mi]; ++i) sol.y[rx.offset[mi] + i] = mm.moments[i];
  }
  return sol;
}

// Sample rows of the executed run: state and control columns are padded to
// the widest mode (blank fields for modes with fewer variables), and each
// transition appears as a comment line between the segments it separates.
inline void write_trajectory_csv(std::ostream& os, const HybridProblem& p,
                                 const HybridTrajectory& traj) {
  int nx = 0, nu = 0;
  for (const auto& m : p.modes) {
    nx = std::max(nx, m.state_dim());
    nu = std::max(nu, m.control_dim());
  }
  os << "t,mode";
  for (int j = 1; j <= nx; ++j) os << ",x" << j;
  for (int c = 1; c <= nu; ++c) os << ",u" << c;
  os << ",running_cost\n";
  for (std::size_t si = 0; si < traj.segments.size(); ++si) {
    const auto& seg = traj.segments[si];
    for (std::size_t i = 0; i < seg.times.size(); ++i) {
      os << detail::fmt_g(seg.times[i]) << "," << p.modes[seg.mode].id;
      for (int j = 0; j < nx; ++j)
        os << "," << (j < static_cast<int>(seg.states[i].size()) ? detail::fmt_g(seg.states[i][j]) : "");
      for (int c = 0; c < nu; ++c)
        os << "," << (c < static_cast<int>(seg.controls[i].size()) ? detail::fmt_g(seg.controls[i][c]) : "");
      os << "," << detail::fmt_g(seg.cum_cost[i]) << "\n";
    }
    if (si < traj.events.size()) {
      const auto& ev = traj.events[si];
      os << "# event t=" << detail::fmt_g(ev.time) << " edge=" << p.edges[ev.edge].from << "->"
         << p.edges[ev.edge].to << "\n";
    }
  }
}

}  // namespace hocp
