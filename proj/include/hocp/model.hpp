#pragma once

// Hybrid control problem description: modes with polynomial dynamics over
// semialgebraic domains, guarded edges with polynomial resets, an initial
// state, and a fixed or free time horizon. Validation covers structural
// integrity plus sampled checks of the model assumptions:
//   A1 guard separation     guards of a mode are pairwise disjoint and reset
//                           images land off guards
//   A2 transversality       the vector field has nonzero normal speed at
//                           guards (not machine-checkable; always a warning)
//   A3 non-Zeno             executions cross guards finitely often (not
//                           machine-checkable; always a warning)
//   A4 target separation    free-horizon targets are disjoint from their
//                           mode's outgoing guards
//   A5 initial state        x0 lies in its mode's domain and off guards

#include <array>
#include <optional>
#include <random>

#include "hocp/poly.hpp"

namespace hocp {

inline const std::string kTimeVar = "t";

// Polynomial inequalities p >= 0 and equalities p = 0 over a state space.
struct SemialgebraicSet {
  std::vector<Polynomial> ineq;
  std::vector<Polynomial> eq;
};

struct Mode {
  std::string id;
  std::vector<std::string> state_vars;
  std::vector<std::string> control_vars;
  std::vector<std::array<double, 2>> control_box;  // per control channel
  std::vector<Polynomial> dynamics;                // over flow_space()
  SemialgebraicSet domain;                         // over state_space()
  std::optional<SemialgebraicSet> target;          // absent: no terminal measure
  Polynomial running_cost;                         // over flow_space()
  Polynomial terminal_cost;                        // over state_space()
  std::vector<std::array<double, 2>> scale_box;    // optional normalization box per state

  int state_dim() const { return static_cast<int>(state_vars.size()); }
  int control_dim() const { return static_cast<int>(control_vars.size()); }

  VarSpace state_space() const {
    std::vector<std::string> n = state_vars;
    return VarSpace::make(std::move(n), std::vector<VarRole>(state_vars.size(), VarRole::State));
  }

  VarSpace timed_state_space() const {
    std::vector<std::string> n{kTimeVar};
    n.insert(n.end(), state_vars.begin(), state_vars.end());
    std::vector<VarRole> r{VarRole::Time};
    r.insert(r.end(), state_vars.size(), VarRole::State);
    return VarSpace::make(std::move(n), std::move(r));
  }

  VarSpace flow_space() const {
    std::vector<std::string> n{kTimeVar};
    n.insert(n.end(), state_vars.begin(), state_vars.end());
    n.insert(n.end(), control_vars.begin(), control_vars.end());
    std::vector<VarRole> r{VarRole::Time};
    r.insert(r.end(), state_vars.size(), VarRole::State);
    r.insert(r.end(), control_vars.size(), VarRole::Control);
    return VarSpace::make(std::move(n), std::move(r));
  }
};

struct Edge {
  std::string from, to;
  SemialgebraicSet guard;        // over the source mode's state space; >=1 equality
  std::vector<Polynomial> reset; // length = target state dim, over source states
};

struct Horizon {
  bool free = false;  // free: terminal time anywhere in [0, T]; fixed: exactly T
  double T = 1.0;
};

struct HybridProblem {
  std::string name;
  std::vector<Mode> modes;
  std::vector<Edge> edges;
  std::string x0_mode;
  std::vector<double> x0;
  Horizon horizon;
  int default_order = 4;  // default relaxation order 2k
  std::string notes;

  int mode_index(const std::string& id) const {
    for (std::size_t i = 0; i < modes.size(); ++i)
      if (modes[i].id == id) return static_cast<int>(i);
    return -1;
  }

  const Mode& mode(const std::string& id) const {
    const int i = mode_index(id);
    if (i < 0) throw Error("unknown mode id: " + id);
    return modes[i];
  }

  std::vector<int> edges_out_of(int mode) const {
    std::vector<int> r;
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (mode_index(edges[e].from) == mode) r.push_back(static_cast<int>(e));
    return r;
  }

  std::vector<int> edges_into(int mode) const {
    std::vector<int> r;
    for (std::size_t e = 0; e < edges.size(); ++e)
      if (mode_index(edges[e].to) == mode) r.push_back(static_cast<int>(e));
    return r;
  }
};

// Concatenation of the per-mode control boxes into one global control space.
// Every mode owns a contiguous slice of channels.
struct ControlSpace {
  int total = 0;
  std::vector<int> offset;                         // per mode
  std::vector<int> width;                          // per mode
  std::vector<std::array<double, 2>> bounds;       // concatenated boxes
};

inline ControlSpace control_space(const HybridProblem& p) {
  ControlSpace cs;
  for (const auto& m : p.modes) {
    cs.offset.push_back(cs.total);
    cs.width.push_back(m.control_dim());
    cs.total += m.control_dim();
    cs.bounds.insert(cs.bounds.end(), m.control_box.begin(), m.control_box.end());
  }
  return cs;
}

enum class Severity { Warning, Error };

struct Diagnostic {
  Severity severity;
  std::string code;
  std::string message;
};

inline bool has_errors(const std::vector<Diagnostic>& ds) {
  for (const auto& d : ds)
    if (d.severity == Severity::Error) return true;
  return false;
}

inline bool in_set(const SemialgebraicSet& s, const std::vector<double>& x, double tol) {
  for (const auto& q : s.ineq)
    if (eval(q, x) < -tol) return false;
  for (const auto& q : s.eq)
    if (std::abs(eval(q, x)) > tol) return false;
  return true;
}

// Deterministic Latin hypercube in [0,1]^dim.
inline std::vector<std::vector<double>> latin_hypercube(int n, int dim, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
  std::vector<int> perm(n);
  for (int d = 0; d < dim; ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < n; ++i) pts[i][d] = (perm[i] + unif(rng)) / n;
  }
  return pts;
}

inline std::vector<std::array<double, 2>> sampling_box(const Mode& m) {
  if (!m.scale_box.empty()) return m.scale_box;
  return std::vector<std::array<double, 2>>(m.state_dim(), {-1.0, 1.0});
}

// Gauss-Newton projection of x onto the zero set of the given equalities.
// Returns false if the residual does not reach tol.
inline bool project_to_equalities(const std::vector<Polynomial>& eqs,
                                  const std::vector<std::vector<Polynomial>>& grads,
                                  std::vector<double>& x, double tol = 1e-12, int iters = 50) {
  const int ne = static_cast<int>(eqs.size());
  const int n = static_cast<int>(x.size());
  for (int it = 0; it < iters; ++it) {
    std::vector<double> g(ne);
    double worst = 0.0;
    for (int i = 0; i < ne; ++i) {
      g[i] = eval(eqs[i], x);
      worst = std::max(worst, std::abs(g[i]));
    }
    if (worst <= tol) return true;
    // One Gauss-Newton step: x -= J^T (J J^T)^{-1} g, built densely (ne is tiny).
    std::vector<std::vector<double>> J(ne, std::vector<double>(n));
    for (int i = 0; i < ne; ++i)
      for (int j = 0; j < n; ++j) J[i][j] = eval(grads[i][j], x);
    std::vector<std::vector<double>> M(ne, std::vector<double>(ne, 0.0));
    for (int i = 0; i < ne; ++i)
      for (int k = 0; k < ne; ++k)
        for (int j = 0; j < n; ++j) M[i][k] += J[i][j] * J[k][j];
    // Solve M y = g by Gaussian elimination with partial pivoting.
    std::vector<double> y = g;
    for (int col = 0; col < ne; ++col) {
      int piv = col;
      for (int r = col + 1; r < ne; ++r)
        if (std::abs(M[r][col]) > std::abs(M[piv][col])) piv = r;
      if (std::abs(M[piv][col]) < 1e-14) return false;
      std::swap(M[col], M[piv]);
      std::swap(y[col], y[piv]);
      for (int r = 0; r < ne; ++r) {
        if (r == col) continue;
        const double f = M[r][col] / M[col][col];
        for (int c2 = col; c2 < ne; ++c2) M[r][c2] -= f * M[col][c2];
        y[r] -= f * y[col];
      }
    }
    for (int i = 0; i < ne; ++i) y[i] /= M[i][i];
    for (int j = 0; j < n; ++j) {
      double step = 0.0;
      for (int i = 0; i < ne; ++i) step += J[i][j] * y[i];
      x[j] -= step;
    }
  }
  double worst = 0.0;
  for (const auto& q : eqs) worst = std::max(worst, std::abs(eval(q, x)));
  return worst <= tol;
}

// Samples points on a guard: Latin hypercube candidates in the source mode's
// sampling box, projected onto the guard equalities, filtered by membership.
inline std::vector<std::vector<double>> sample_guard(const Mode& src, const SemialgebraicSet& guard,
                                                     int candidates, std::uint32_t seed) {
  const auto box = sampling_box(src);
  const int n = src.state_dim();
  std::vector<std::vector<Polynomial>> grads;
  for (const auto& q : guard.eq) {
    std::vector<Polynomial> row;
    for (int j = 0; j < n; ++j) row.push_back(partial(q, j));
    grads.push_back(std::move(row));
  }
  std::vector<std::vector<double>> out;
  for (auto& u : latin_hypercube(candidates, n, seed)) {
    std::vector<double> x(n);
    for (int j = 0; j < n; ++j) x[j] = box[j][0] + u[j] * (box[j][1] - box[j][0]);
    if (!guard.eq.empty() && !project_to_equalities(guard.eq, grads, x)) continue;
    if (in_set(guard, x, 1e-9)) out.push_back(std::move(x));
  }
  return out;
}

namespace detail {
inline void check_set_space(const SemialgebraicSet& s, const VarSpace& sp, const std::string& what,
                            std::vector<Diagnostic>& ds) {
  for (const auto& q : s.ineq)
    if (q.space != sp)
      ds.push_back({Severity::Error, "structure", what + ": inequality over wrong variable space"});
  for (const auto& q : s.eq)
    if (q.space != sp)
      ds.push_back({Severity::Error, "structure", what + ": equality over wrong variable space"});
}
}  // namespace detail

// Full diagnostic sweep. Structural defects and assumption violations are
// errors; unverifiable assumptions (A2, A3) are permanent warnings.
inline std::vector<Diagnostic> validate(const HybridProblem& p, std::uint32_t seed = 0) {
  std::vector<Diagnostic> ds;
  if (p.modes.empty()) {
    ds.push_back({Severity::Error, "structure", "problem has no modes"});
    return ds;
  }
  for (std::size_t i = 0; i < p.modes.size(); ++i)
    for (std::size_t j = i + 1; j < p.modes.size(); ++j)
      if (p.modes[i].id == p.modes[j].id)
        ds.push_back({Severity::Error, "structure", "duplicate mode id " + p.modes[i].id});
  if (!(p.horizon.T > 0.0))
    ds.push_back({Severity::Error, "structure", "horizon must be positive"});
  if (p.default_order < 2 || p.default_order % 2 != 0)
    ds.push_back({Severity::Error, "structure", "default relaxation order must be an even integer >= 2"});

  for (const auto& m : p.modes) {
    const std::string tag = "mode " + m.id;
    if (m.state_vars.empty())
      ds.push_back({Severity::Error, "structure", tag + ": no state variables"});
    if (m.control_vars.size() != m.control_box.size())
      ds.push_back({Severity::Error, "structure", tag + ": control box size does not match control channels"});
    for (const auto& b : m.control_box)
      if (!(b[0] <= b[1]))
        ds.push_back({Severity::Error, "structure", tag + ": control box has lo > hi"});
    if (!m.scale_box.empty() && m.scale_box.size() != m.state_vars.size())
      ds.push_back({Severity::Error, "structure", tag + ": scale box size does not match state dimension"});
    for (const auto& b : m.scale_box)
      if (!(b[0] < b[1]))
        ds.push_back({Severity::Error, "structure", tag + ": scale box interval is empty"});
    if (static_cast<int>(m.dynamics.size()) != m.state_dim())
      ds.push_back({Severity::Error, "structure", tag + ": dynamics count does not match state dimension"});
    VarSpace flow, st;
    try {
      flow = m.flow_space();
      st = m.state_space();
    } catch (const Error& e) {
      ds.push_back({Severity::Error, "structure", tag + ": " + e.what()});
      continue;
    }
    for (const auto& f : m.dynamics)
      if (f.space != flow)
        ds.push_back({Severity::Error, "structure", tag + ": dynamics component over wrong variable space"});
    if (m.running_cost.space != flow)
      ds.push_back({Severity::Error, "structure", tag + ": running cost over wrong variable space"});
    if (m.terminal_cost.space != st)
      ds.push_back({Severity::Error, "structure", tag + ": terminal cost over wrong variable space"});
    detail::check_set_space(m.domain, st, tag + " domain", ds);
    if (m.target) detail::check_set_space(*m.target, st, tag + " target", ds);
  }

  for (const auto& e : p.edges) {
    const std::string tag = "edge " + e.from + "->" + e.to;
    const int si = p.mode_index(e.from), ti = p.mode_index(e.to);
    if (si < 0 || ti < 0) {
      ds.push_back({Severity::Error, "structure", tag + ": unknown mode id"});
      continue;
    }
    const Mode& src = p.modes[si];
    const Mode& dst = p.modes[ti];
    if (e.guard.eq.empty())
      ds.push_back({Severity::Error, "structure", tag + ": guard needs at least one equality (codimension one)"});
    detail::check_set_space(e.guard, src.state_space(), tag + " guard", ds);
    if (static_cast<int>(e.reset.size()) != dst.state_dim())
      ds.push_back({Severity::Error, "structure", tag + ": reset length does not match target state dimension"});
    for (const auto& r : e.reset)
      if (r.space != src.state_space())
        ds.push_back({Severity::Error, "structure", tag + ": reset component over wrong variable space"});
  }

  const int i0 = p.mode_index(p.x0_mode);
  if (i0 < 0) {
    ds.push_back({Severity::Error, "structure", "x0 references unknown mode " + p.x0_mode});
  } else if (static_cast<int>(p.x0.size()) != p.modes[i0].state_dim()) {
    ds.push_back({Severity::Error, "structure", "x0 dimension does not match its mode"});
  }
  if (has_errors(ds)) return ds;  // sampled checks assume a structurally sound problem

  // A5 plus domain membership for the initial state.
  if (!in_set(p.modes[i0].domain, p.x0, 1e-9))
    ds.push_back({Severity::Error, "x0-in-domain",
                  "initial state lies outside the domain of mode " + p.x0_mode + " (assumption A5)"});
  for (const int ei : p.edges_out_of(i0)) {
    if (in_set(p.edges[ei].guard, p.x0, 1e-9))
      ds.push_back({Severity::Error, "A5-x0-off-guards",
                    "initial state lies on the guard of edge " + p.edges[ei].from + "->" + p.edges[ei].to +
                        " (assumption A5)"});
  }

  // Sampled per-edge checks.
  std::vector<std::vector<std::vector<double>>> samples(p.edges.size());
  for (std::size_t ei = 0; ei < p.edges.size(); ++ei) {
    const Edge& e = p.edges[ei];
    const Mode& src = p.mode(e.from);
    samples[ei] = sample_guard(src, e.guard, 256, seed + static_cast<std::uint32_t>(ei));
    if (samples[ei].empty()) {
      ds.push_back({Severity::Warning, "guard-sampling-empty",
                    "no sample points found on guard of edge " + e.from + "->" + e.to +
                        "; sampled checks skipped for this edge"});
      continue;
    }
    const Mode& dst = p.mode(e.to);
    // Reset image containment in the target domain (warning: benchmark sets
    // routinely leave slack only on the dynamically reachable part of a guard).
    double worst = 0.0;
    int checked = 0;
    for (const auto& x : samples[ei]) {
      if (checked++ >= 64) break;
      std::vector<double> img(dst.state_dim());
      for (int j = 0; j < dst.state_dim(); ++j) img[j] = eval(e.reset[j], x);
      for (const auto& q : dst.domain.ineq) worst = std::max(worst, -eval(q, img));
      for (const auto& q : dst.domain.eq) worst = std::max(worst, std::abs(eval(q, img)));
    }
    if (worst > 1e-6)
      ds.push_back({Severity::Warning, "reset-leaves-domain",
                    "edge " + e.from + "->" + e.to + ": reset image of sampled guard points leaves the target domain (worst violation " +
                        std::to_string(worst) + ")"});
    // A1: reset images must land off the target mode's guards.
    for (const int eo : p.edges_out_of(p.mode_index(e.to))) {
      for (const auto& x : samples[ei]) {
        std::vector<double> img(dst.state_dim());
        for (int j = 0; j < dst.state_dim(); ++j) img[j] = eval(e.reset[j], x);
        if (in_set(p.edges[eo].guard, img, 1e-9)) {
          ds.push_back({Severity::Error, "A1-guard-separation",
                        "reset image of edge " + e.from + "->" + e.to + " meets the guard of edge " +
                            p.edges[eo].from + "->" + p.edges[eo].to + " (assumption A1)"});
          break;
        }
      }
    }
  }
  // A1: guards within one mode are pairwise disjoint.
  for (std::size_t a = 0; a < p.edges.size(); ++a) {
    for (std::size_t b2 = 0; b2 < p.edges.size(); ++b2) {
      if (a == b2 || p.edges[a].from != p.edges[b2].from) continue;
      for (const auto& x : samples[a]) {
        if (in_set(p.edges[b2].guard, x, 1e-9)) {
          ds.push_back({Severity::Error, "A1-guard-separation",
                        "guards of edges " + p.edges[a].from + "->" + p.edges[a].to + " and " + p.edges[b2].from +
                            "->" + p.edges[b2].to + " share a sampled point (assumption A1)"});
          break;
        }
      }
    }
  }
  // A4 matters when execution stops on target membership, i.e. free horizon.
  if (p.horizon.free) {
    for (std::size_t mi = 0; mi < p.modes.size(); ++mi) {
      if (!p.modes[mi].target) continue;
      for (const int eo : p.edges_out_of(static_cast<int>(mi))) {
        for (const auto& x : samples[eo]) {
          if (in_set(*p.modes[mi].target, x, 1e-9)) {
            ds.push_back({Severity::Error, "A4-target-guard-separation",
                          "target of mode " + p.modes[mi].id + " meets the guard of edge " + p.edges[eo].from +
                              "->" + p.edges[eo].to + " at a sampled point (assumption A4)"});
            break;
          }
        }
      }
    }
  }

  ds.push_back({Severity::Warning, "A2-transversality",
                "transversal crossing of guards (assumption A2) cannot be verified statically"});
  ds.push_back({Severity::Warning, "A3-non-zeno",
                "absence of Zeno executions (assumption A3) cannot be verified statically"});
  return ds;
}

}  // namespace hocp
