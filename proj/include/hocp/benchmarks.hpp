#pragma once

// Built-in benchmark problems. Each builder returns a fully validated
// HybridProblem; gen_problems serializes them into problems/*.json.

#include <cmath>

#include "hocp/model.hpp"

namespace hocp::benchmarks {

// (v - lo)(hi - v) >= 0 encodes v in [lo, hi].
inline Polynomial box_ineq(const VarSpace& s, const std::string& var, double lo, double hi) {
  const auto v = Polynomial::variable(s, var);
  return (v - lo) * (hi - v);
}

// Double integrator split into a ball around the origin (mode 1) and its
// complement (mode 2), joined by an identity reset on the circle
// x1^2 + x2^2 = 0.3. Dynamics in both modes: x1' = x2, x2' = u, |u| <= 1.
namespace detail {

inline HybridProblem di_base() {
  HybridProblem p;
  for (const char* id : {"1", "2"}) {
    Mode m;
    m.id = id;
    m.state_vars = {"x1", "x2"};
    m.control_vars = {"u"};
    m.control_box = {{-1.0, 1.0}};
    const auto flow = m.flow_space();
    const auto st = m.state_space();
    m.dynamics = {Polynomial::variable(flow, "x2"), Polynomial::variable(flow, "u")};
    const auto r2 = Polynomial::variable(st, "x1") * Polynomial::variable(st, "x1") +
                    Polynomial::variable(st, "x2") * Polynomial::variable(st, "x2");
    m.domain.ineq = {std::string(id) == "1" ? 0.3 - r2 : r2 - 0.3};
    m.running_cost = Polynomial::constant(flow, 1.0);
    m.terminal_cost = Polynomial::constant(st, 0.0);
    p.modes.push_back(std::move(m));
  }
  Edge e;
  e.from = "2";
  e.to = "1";
  const auto st = p.modes[1].state_space();
  e.guard.eq = {Polynomial::variable(st, "x1") * Polynomial::variable(st, "x1") +
                Polynomial::variable(st, "x2") * Polynomial::variable(st, "x2") - 0.3};
  e.reset = {Polynomial::variable(st, "x1"), Polynomial::variable(st, "x2")};
  p.edges.push_back(std::move(e));
  return p;
}

}  // namespace detail

// Minimum-time steering to the origin from (0.3, 1), free final time in [0, 5].
inline HybridProblem di_mintime() {
  HybridProblem p = detail::di_base();
  p.name = "di_mintime";
  const auto st1 = p.modes[0].state_space();
  SemialgebraicSet tgt;
  tgt.eq = {Polynomial::variable(st1, "x1"), Polynomial::variable(st1, "x2")};
  p.modes[0].target = tgt;
  // The outer region is compactified with an explicit box (domains must be
  // compact; without it the relaxation weakens measurably). +/-1.5 contains
  // the reachable set from x0 with margin and matches the scaling box.
  const auto st2 = p.modes[1].state_space();
  p.modes[1].domain.ineq.push_back(box_ineq(st2, "x1", -1.5, 1.5));
  p.modes[1].domain.ineq.push_back(box_ineq(st2, "x2", -1.5, 1.5));
  p.modes[0].scale_box = {{-0.6, 0.6}, {-0.6, 0.6}};
  p.modes[1].scale_box = {{-1.5, 1.5}, {-1.5, 1.5}};
  p.x0_mode = "2";
  p.x0 = {0.3, 1.0};
  p.horizon = {true, 5.0};
  p.default_order = 6;
  p.notes =
      "Minimum-time steering of the hybridized double integrator to the origin; "
      "reference cost 2.7889 (analytic bang-bang solution).";
  return p;
}

// Quadratic regulation cost x1^2 + x2^2 + 20 u^2 over a fixed horizon from
// (1, 1); the trajectory may end anywhere, so each mode's target is its domain.
inline HybridProblem di_lqr(double T) {
  HybridProblem p = detail::di_base();
  p.name = T < 10.0 ? "di_lqr_t5" : "di_lqr_t15";
  // Compactify the outer region (see di_mintime); the regulator starts at
  // (1, 1), so the box is wider here. Added before targets so that the
  // whole-domain targets inherit it.
  const auto st2 = p.modes[1].state_space();
  p.modes[1].domain.ineq.push_back(box_ineq(st2, "x1", -2.5, 2.5));
  p.modes[1].domain.ineq.push_back(box_ineq(st2, "x2", -2.5, 2.5));
  for (auto& m : p.modes) {
    const auto flow = m.flow_space();
    const auto x1 = Polynomial::variable(flow, "x1");
    const auto x2 = Polynomial::variable(flow, "x2");
    const auto u = Polynomial::variable(flow, "u");
    m.running_cost = x1 * x1 + x2 * x2 + 20.0 * (u * u);
    m.target = m.domain;
  }
  p.modes[0].scale_box = {{-0.6, 0.6}, {-0.6, 0.6}};
  p.modes[1].scale_box = {{-2.5, 2.5}, {-2.5, 2.5}};
  p.x0_mode = "2";
  p.x0 = {1.0, 1.0};
  p.horizon = {false, T};
  p.default_order = 6;
  p.notes = T < 10.0 ? "Finite-horizon quadratic regulation of the hybridized double integrator, T=5; "
                       "reference cost 24.9503 (Riccati solution)."
                     : "Finite-horizon quadratic regulation of the hybridized double integrator, T=15; "
                       "reference cost 26.2033 (Riccati solution).";
  return p;
}

// Dubins car in the upper half square (mode 1) and lower half square (mode 2),
// with a one-dimensional express lane (mode 3) along the top edge. Heading
// trig is replaced by its order-2 expansion around zero. Minimum time from
// (-0.8, 0.8, 0) to the point (0.8, -0.8) in mode 2, free final time in [0, 3].
inline HybridProblem dubins_shortcut() {
  const double pi = std::acos(-1.0);
  HybridProblem p;
  p.name = "dubins_shortcut";
  for (const char* id : {"1", "2"}) {
    Mode m;
    m.id = id;
    m.state_vars = {"x1", "x2", "x3"};
    m.control_vars = {"v", "w"};
    m.control_box = {{0.0, 1.0}, {-3.0, 3.0}};
    const auto flow = m.flow_space();
    const auto st = m.state_space();
    const auto x3 = Polynomial::variable(flow, "x3");
    const auto v = Polynomial::variable(flow, "v");
    m.dynamics = {v * (1.0 - 0.5 * (x3 * x3)),  // cos(x3) ~ 1 - x3^2/2
                  v * x3,                       // sin(x3) ~ x3
                  Polynomial::variable(flow, "w")};
    const double ylo = std::string(id) == "1" ? 0.0 : -1.0;
    const double yhi = std::string(id) == "1" ? 1.0 : 0.0;
    m.domain.ineq = {box_ineq(st, "x1", -1.0, 1.0), box_ineq(st, "x2", ylo, yhi),
                     box_ineq(st, "x3", -pi, pi)};
    m.running_cost = Polynomial::constant(flow, 1.0);
    m.terminal_cost = Polynomial::constant(st, 0.0);
    m.scale_box = {{-1.0, 1.0}, {ylo, yhi}, {-pi, pi}};
    p.modes.push_back(std::move(m));
  }
  {
    Mode m;
    m.id = "3";
    m.state_vars = {"x1"};
    m.control_vars = {"v"};
    m.control_box = {{0.0, 2.0}};
    const auto flow = m.flow_space();
    const auto st = m.state_space();
    m.dynamics = {-1.0 * Polynomial::variable(flow, "v")};
    m.domain.ineq = {box_ineq(st, "x1", -1.0, 1.0)};
    m.running_cost = Polynomial::constant(flow, 1.0);
    m.terminal_cost = Polynomial::constant(st, 0.0);
    m.scale_box = {{-1.0, 1.0}};
    p.modes.push_back(std::move(m));
  }
  const auto st3 = p.modes[0].state_space();  // shared by modes 1 and 2
  const auto st1 = p.modes[2].state_space();
  {
    Edge e;  // crossing the x axis downward keeps the state
    e.from = "1";
    e.to = "2";
    e.guard.eq = {Polynomial::variable(st3, "x2")};
    e.guard.ineq = {box_ineq(st3, "x1", -1.0, 1.0), box_ineq(st3, "x3", -pi, pi)};
    e.reset = {Polynomial::variable(st3, "x1"), Polynomial::variable(st3, "x2"),
               Polynomial::variable(st3, "x3")};
    p.edges.push_back(std::move(e));
  }
  {
    Edge e;  // entering the express lane at the top edge
    e.from = "1";
    e.to = "3";
    e.guard.eq = {Polynomial::variable(st3, "x2") - 1.0};
    e.guard.ineq = {box_ineq(st3, "x1", -1.0, 1.0), box_ineq(st3, "x3", -pi, pi)};
    e.reset = {Polynomial::constant(st3, 1.0)};
    p.edges.push_back(std::move(e));
  }
  {
    Edge e;  // leaving the lane at its far end drops into the lower half
    e.from = "3";
    e.to = "2";
    e.guard.eq = {Polynomial::variable(st1, "x1") + 1.0};
    e.reset = {Polynomial::constant(st1, 0.6), Polynomial::constant(st1, -0.8),
               Polynomial::constant(st1, 0.0)};
    p.edges.push_back(std::move(e));
  }
  SemialgebraicSet tgt;
  tgt.eq = {Polynomial::variable(st3, "x1") - 0.8, Polynomial::variable(st3, "x2") + 0.8};
  tgt.ineq = {box_ineq(st3, "x3", -pi, pi)};
  p.modes[1].target = tgt;
  p.x0_mode = "1";
  p.x0 = {-0.8, 0.8, 0.0};
  p.horizon = {true, 3.0};
  p.default_order = 6;
  p.notes =
      "Minimum-time Dubins car with an express lane along the top edge; "
      "reference cost 1.5651 (analytic, transition sequence 1-3-2).";
  return p;
}

namespace detail {

// Spring-loaded inverted pendulum. Mode 1 is stance with state
// (l, ldot, theta, thetadot, a) and leg actuation u; modes 2 (ascending) and
// 3 (descending) are ballistic flight with state (a, adot, b, bdot). Stance
// dynamics and the liftoff reset are Taylor expanded around
// (l, theta) = (l0, 0) and truncated at total degree 3.
inline HybridProblem slip_base() {
  const double M = 1.0, k = 6.0, g0 = 0.2, l0 = 0.2;
  const double alpha = std::acos(-1.0) / 6.0;
  const double ca = std::cos(alpha), sa = std::sin(alpha);

  HybridProblem p;
  {
    Mode m;
    m.id = "1";
    m.state_vars = {"x1", "x2", "x3", "x4", "x5"};
    m.control_vars = {"u"};
    m.control_box = {{0.0, 0.1}};
    const auto flow = m.flow_space();
    const auto st = m.state_space();

    // Shifted coordinates: d1 = x1 - l0 so the expansion point is the origin.
    const auto shifted = VarSpace::make({"t", "d1", "x2", "x3", "x4", "x5", "u"},
                                        {VarRole::Time, VarRole::State, VarRole::State, VarRole::State,
                                         VarRole::State, VarRole::State, VarRole::Control});
    const auto d1 = Polynomial::variable(shifted, "d1");
    const auto x2 = Polynomial::variable(shifted, "x2");
    const auto x3 = Polynomial::variable(shifted, "x3");
    const auto x4 = Polynomial::variable(shifted, "x4");
    const auto u = Polynomial::variable(shifted, "u");
    const auto sin3 = taylor_trig(shifted, Trig::Sin, "x3", 3);
    const auto cos3 = taylor_trig(shifted, Trig::Cos, "x3", 3);
    // 1/x1 = 1/(l0 + d1) as a geometric series, enough terms for degree 3.
    const auto inv_l = (1.0 / l0) * (1.0 - d1 * (1.0 / l0) + (d1 * d1) * (1.0 / (l0 * l0)));
    std::vector<Polynomial> f(5, Polynomial(shifted));
    f[0] = x2;
    f[1] = (-k / M) * d1 - g0 * cos3 + (k / M) * u;
    f[2] = x4;
    f[3] = -2.0 * (x2 * x4 * inv_l) - g0 * (sin3 * inv_l);
    f[4] = -1.0 * (x2 * sin3) - ((l0 + d1) * x4) * cos3;

    std::vector<Polynomial> images;
    for (const auto& name : shifted.names) {
      auto img = Polynomial::variable(flow, name == "d1" ? "x1" : name);
      if (name == "d1") img = img - l0;
      images.push_back(std::move(img));
    }
    for (auto& fi : f) m.dynamics.push_back(compose(truncate(fi, 3), flow, images));

    m.domain.ineq = {box_ineq(st, "x1", 0.1, 0.2), box_ineq(st, "x2", -0.3, 0.3),
                     box_ineq(st, "x3", -1.0, 1.0), box_ineq(st, "x4", -3.0, 0.0),
                     box_ineq(st, "x5", -1.0, 1.0)};
    m.terminal_cost = Polynomial::constant(st, 0.0);
    m.scale_box = {{0.1, 0.2}, {-0.3, 0.3}, {-1.0, 1.0}, {-3.0, 0.0}, {-1.0, 1.0}};
    p.modes.push_back(std::move(m));
  }
  for (const char* id : {"2", "3"}) {
    Mode m;
    m.id = id;
    m.state_vars = {"x1", "x2", "x3", "x4"};
    const auto flow = m.flow_space();
    const auto st = m.state_space();
    m.dynamics = {Polynomial::variable(flow, "x2"), Polynomial::constant(flow, 0.0),
                  Polynomial::variable(flow, "x4"), Polynomial::constant(flow, -g0)};
    const double blo = std::string(id) == "2" ? 0.15 : l0 * ca;
    const double vlo = std::string(id) == "2" ? 0.0 : -1.0;
    const double vhi = std::string(id) == "2" ? 1.0 : 0.0;
    m.domain.ineq = {box_ineq(st, "x1", -1.0, 1.0), box_ineq(st, "x2", 0.0, 0.5),
                     box_ineq(st, "x3", blo, 0.5), box_ineq(st, "x4", vlo, vhi)};
    m.terminal_cost = Polynomial::constant(st, 0.0);
    m.scale_box = {{-1.0, 1.0}, {0.0, 0.5}, {blo, 0.5}, {vlo, vhi}};
    p.modes.push_back(std::move(m));
  }

  const auto st1 = p.modes[0].state_space();
  const auto stf = p.modes[1].state_space();
  {
    Edge e;  // liftoff: spring back at full length, still extending
    e.from = "1";
    e.to = "2";
    e.guard.eq = {Polynomial::variable(st1, "x1") - l0};
    e.guard.ineq = {Polynomial::variable(st1, "x2"), box_ineq(st1, "x2", -0.3, 0.3),
                    box_ineq(st1, "x3", -1.0, 1.0), box_ineq(st1, "x4", -3.0, 0.0),
                    box_ineq(st1, "x5", -1.0, 1.0)};
    const auto x2 = Polynomial::variable(st1, "x2");
    const auto x3 = Polynomial::variable(st1, "x3");
    const auto x4 = Polynomial::variable(st1, "x4");
    const auto x5 = Polynomial::variable(st1, "x5");
    const auto sin3 = taylor_trig(st1, Trig::Sin, "x3", 3);
    const auto cos3 = taylor_trig(st1, Trig::Cos, "x3", 3);
    e.reset = {x5, truncate(-1.0 * (x2 * sin3) - (l0 * x4) * cos3, 3),
               truncate(l0 * cos3, 3), truncate(x2 * cos3 - (l0 * x4) * sin3, 3)};
    p.edges.push_back(std::move(e));
  }
  {
    Edge e;  // apex: vertical velocity crosses zero
    e.from = "2";
    e.to = "3";
    e.guard.eq = {Polynomial::variable(stf, "x4")};
    e.guard.ineq = {box_ineq(stf, "x1", -1.0, 1.0), box_ineq(stf, "x2", 0.0, 0.5),
                    box_ineq(stf, "x3", 0.15, 0.5)};
    e.reset = {Polynomial::variable(stf, "x1"), Polynomial::variable(stf, "x2"),
               Polynomial::variable(stf, "x3"), Polynomial::variable(stf, "x4")};
    p.edges.push_back(std::move(e));
  }
  {
    Edge e;  // touchdown: body height reaches l0*cos(alpha), leg resets to alpha
    e.from = "3";
    e.to = "1";
    e.guard.eq = {Polynomial::variable(stf, "x3") - l0 * ca};
    e.guard.ineq = {box_ineq(stf, "x1", -1.0, 1.0), box_ineq(stf, "x2", 0.0, 0.5),
                    box_ineq(stf, "x4", -1.0, 0.0)};
    const auto x1 = Polynomial::variable(stf, "x1");
    const auto x2 = Polynomial::variable(stf, "x2");
    const auto x4 = Polynomial::variable(stf, "x4");
    e.reset = {Polynomial::constant(stf, l0), -sa * x2 + ca * x4, Polynomial::constant(stf, alpha),
               (-ca / l0) * x2 + (-sa / l0) * x4, x1};
    p.edges.push_back(std::move(e));
  }
  p.x0_mode = "3";
  p.x0 = {-1.0, 0.3, 0.2, 0.0};
  return p;
}

}  // namespace detail

// Maximize the body height integral over a fixed horizon T = 2.5. In stance
// the height l*cos(theta) is approximated to first order by the leg length.
inline HybridProblem slip_height() {
  HybridProblem p = detail::slip_base();
  p.name = "slip_height";
  for (auto& m : p.modes) {
    const auto flow = m.flow_space();
    m.running_cost = -1.0 * Polynomial::variable(flow, m.id == "1" ? "x1" : "x3");
    m.target = m.domain;
  }
  p.horizon = {false, 2.5};
  p.default_order = 4;
  p.notes =
      "Hopping height maximization for the actuated spring-loaded inverted pendulum; "
      "reference cost -0.5735 (direct transcription over transition sequences, 3 transitions).";
  return p;
}

// Track the constant-speed reference a(t) = 0.1 t - 1 over a fixed horizon
// T = 4; the squared tracking error is integrated in every mode.
inline HybridProblem slip_track() {
  HybridProblem p = detail::slip_base();
  p.name = "slip_track";
  const double v = 0.1;
  for (auto& m : p.modes) {
    const auto flow = m.flow_space();
    const auto err = v * Polynomial::variable(flow, "t") - 1.0 -
                     Polynomial::variable(flow, m.id == "1" ? "x5" : "x1");
    m.running_cost = err * err;
    m.target = m.domain;
  }
  p.horizon = {false, 4.0};
  p.default_order = 4;
  p.notes =
      "Constant-speed tracking for the actuated spring-loaded inverted pendulum; "
      "reference cost 0.2657 (direct transcription over transition sequences, 8 transitions).";
  return p;
}

inline std::vector<HybridProblem> all() {
  return {di_mintime(), di_lqr(5.0), di_lqr(15.0), dubins_shortcut(), slip_height(), slip_track()};
}

}  // namespace hocp::benchmarks
