// Closed-loop simulation: segment integration against closed forms, guard
// detection with side conditions, transition caps, closest-approach
// truncation, and the transport identity satisfied by empirical moments of
// executed trajectories.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hocp/benchmarks.hpp"
#include "hocp/relax.hpp"
#include "hocp/sim.hpp"

using namespace hocp;

namespace {

// Controller whose raw channel polynomials are produced per mode by `f`.
template <typename F>
PolyController make_controller(const HybridProblem& p, F&& f) {
  PolyController pc;
  for (std::size_t i = 0; i < p.modes.size(); ++i) {
    const Mode& m = p.modes[i];
    ModeController mc;
    mc.mode_id = m.id;
    mc.space = m.timed_state_space();
    mc.saturation = m.control_box;
    for (int c = 0; c < m.control_dim(); ++c) mc.channels.push_back(f(m, mc.space, c));
    pc.modes.push_back(std::move(mc));
  }
  return pc;
}

PolyController constant_controller(const HybridProblem& p, double value) {
  return make_controller(
      p, [&](const Mode&, const VarSpace& sp, int) { return Polynomial::constant(sp, value); });
}

// Two-mode problem with one state, unit speed, and a guard at x = 1 that
// resets to 0; bounces forever under a fixed horizon.
HybridProblem ping_pong(int copies_of_guard = 1) {
  HybridProblem p;
  p.name = "ping_pong";
  for (const char* id : {"a", "b"}) {
    Mode m;
    m.id = id;
    m.state_vars = {"x1"};
    const auto fs = m.flow_space();
    m.dynamics = {Polynomial::constant(fs, 1.0)};
    m.running_cost = Polynomial::constant(fs, 1.0);
    m.terminal_cost = Polynomial::constant(m.state_space(), 0.0);
    p.modes.push_back(std::move(m));
  }
  const auto ss = p.modes[0].state_space();
  for (int rep = 0; rep < copies_of_guard; ++rep) {
    for (const auto& [from, to] : {std::pair{"a", "b"}, std::pair{"b", "a"}}) {
      Edge e;
      e.from = from;
      e.to = to;
      e.guard.eq = {Polynomial::variable(ss, 0) + Polynomial::constant(ss, -1.0)};
      e.reset = {Polynomial::constant(ss, 0.0)};
      p.edges.push_back(std::move(e));
    }
  }
  p.x0_mode = "a";
  p.x0 = {0.0};
  p.horizon = {false, 200.0};
  return p;
}

// Ballistic mode: x1'' = -1 from (0.19, 0.2) crosses x1 = 0.2 upward at
// t = 0.2 - sqrt(0.02) and downward at t = 0.2 + sqrt(0.02). The guard
// demands x2 <= 0, so only the downward crossing is a valid transition.
HybridProblem parabola() {
  HybridProblem p;
  p.name = "parabola";
  Mode a;
  a.id = "a";
  a.state_vars = {"x1", "x2"};
  const auto fs = a.flow_space();
  a.dynamics = {Polynomial::variable(fs, 2), Polynomial::constant(fs, -1.0)};
  a.running_cost = Polynomial::constant(fs, 1.0);
  a.terminal_cost = Polynomial::constant(a.state_space(), 0.0);
  Mode b = a;
  b.id = "b";
  b.dynamics = {Polynomial::constant(fs, 0.0), Polynomial::constant(fs, 0.0)};
  p.modes = {a, b};
  const auto ss = a.state_space();
  Edge e;
  e.from = "a";
  e.to = "b";
  e.guard.eq = {Polynomial::variable(ss, 0) + Polynomial::constant(ss, -0.2)};
  e.guard.ineq = {Polynomial::variable(ss, 1) * -1.0};
  e.reset = {Polynomial::variable(ss, 0), Polynomial::variable(ss, 1)};
  p.edges = {e};
  p.x0_mode = "a";
  p.x0 = {0.19, 0.2};
  p.horizon = {false, 1.0};
  return p;
}

double sup_residual(const Relaxation& rx, const Eigen::VectorXd& y) {
  return (rx.A * y - rx.b).lpNorm<Eigen::Infinity>();
}

}  // namespace

TEST(Segment, ConstantDecelerationMatchesClosedForm) {
  const auto p = benchmarks::di_mintime();
  const auto pc = constant_controller(p, -1.0);
  const auto res = integrate_segment(p, pc, p.mode_index("2"), 0.0, {0.3, 1.0}, 1.0);
  ASSERT_EQ(res.exit, SegmentExit::TimeLimit);
  EXPECT_NEAR(res.t_end, 1.0, 1e-12);
  ASSERT_EQ(res.x_end.size(), 2u);
  EXPECT_NEAR(res.x_end[0], 0.8, 1e-9);
  EXPECT_NEAR(res.x_end[1], 0.0, 1e-9);
  ASSERT_GT(res.segment.times.size(), 10u);
  for (std::size_t i = 0; i < res.segment.times.size(); ++i) {
    const double t = res.segment.times[i];
    EXPECT_NEAR(res.segment.states[i][0], 0.3 + t - 0.5 * t * t, 1e-9);
    EXPECT_NEAR(res.segment.states[i][1], 1.0 - t, 1e-9);
    ASSERT_EQ(res.segment.controls[i].size(), 1u);
    EXPECT_DOUBLE_EQ(res.segment.controls[i][0], -1.0);
  }
  // the running cost of the minimum-time problem is 1
  EXPECT_NEAR(res.segment.cum_cost.back(), 1.0, 1e-10);
}

TEST(Segment, FrozenFieldHoldsState) {
  HybridProblem p;
  p.name = "frozen";
  Mode m;
  m.id = "only";
  m.state_vars = {"x1"};
  const auto fs = m.flow_space();
  m.dynamics = {Polynomial::constant(fs, 0.0)};
  m.running_cost = Polynomial::constant(fs, 1.0);
  m.terminal_cost = Polynomial::constant(m.state_space(), 0.0);
  p.modes = {m};
  p.x0_mode = "only";
  p.x0 = {0.4};
  p.horizon = {false, 1.0};
  const auto traj = execute(p, constant_controller(p, 0.0));
  EXPECT_EQ(traj.reason, TerminalReason::Horizon);
  EXPECT_TRUE(traj.events.empty());
  EXPECT_NEAR(traj.terminal_state[0], 0.4, 1e-12);
  EXPECT_NEAR(traj.cost, 1.0, 1e-10);
  for (const auto& seg : traj.segments)
    for (const auto& x : seg.states) EXPECT_NEAR(x[0], 0.4, 1e-12);
}

TEST(Segment, SaturatedLaneStopsOnGuard) {
  const auto p = benchmarks::dubins_shortcut();
  // raw value 2.3 exceeds the lane's speed box [0, 2]; the applied control
  // saturates at 2, so x1 = 1 - 2t reaches the guard x1 = -1 at t = 1
  const auto pc = constant_controller(p, 2.3);
  const int lane = p.mode_index("3");
  const auto res = integrate_segment(p, pc, lane, 0.0, {1.0}, 3.0);
  ASSERT_EQ(res.exit, SegmentExit::GuardHit);
  EXPECT_EQ(p.edges[res.edge].from, "3");
  EXPECT_EQ(p.edges[res.edge].to, "2");
  EXPECT_NEAR(res.t_end, 1.0, 1e-8);
  EXPECT_LE(std::abs(res.x_end[0] + 1.0), 1e-10);
  for (const auto& u : res.segment.controls) EXPECT_DOUBLE_EQ(u[0], 2.0);
}

TEST(Segment, SideConditionRejectsFirstCrossing) {
  const auto p = parabola();
  const auto pc = constant_controller(p, 0.0);
  const auto res = integrate_segment(p, pc, 0, 0.0, p.x0, 1.0);
  ASSERT_EQ(res.exit, SegmentExit::GuardHit);
  const double t_first = 0.2 - std::sqrt(0.02);  // upward crossing, x2 > 0
  const double t_valid = 0.2 + std::sqrt(0.02);  // downward crossing, x2 < 0
  EXPECT_GT(res.t_end, t_first + 0.1);
  EXPECT_NEAR(res.t_end, t_valid, 1e-8);
  EXPECT_LE(std::abs(res.x_end[0] - 0.2), 1e-10);
  EXPECT_NEAR(res.x_end[1], -std::sqrt(0.02), 1e-8);
}

TEST(Execute, SimultaneousCrossingsThrow) {
  const auto p = ping_pong(2);  // duplicate guards fire at the same instant
  EXPECT_THROW(execute(p, constant_controller(p, 0.0)), Error);
}

TEST(Execute, TransitionCapStopsRun) {
  const auto p = ping_pong();
  const auto traj = execute(p, constant_controller(p, 0.0));
  EXPECT_EQ(traj.reason, TerminalReason::ZenoCap);
  EXPECT_EQ(traj.events.size(), 50u);
  EXPECT_NEAR(traj.terminal_time, 50.0, 1e-6);
  for (const auto& ev : traj.events) {
    EXPECT_LE(std::abs(ev.pre_state[0] - 1.0), 1e-10);
    EXPECT_DOUBLE_EQ(ev.post_state[0], 0.0);
  }
}

TEST(Execute, FreeDriftQuadraticCost) {
  // zero control from (1, 1): x1 = 1 + t, x2 = 1, no transition, and the
  // integral of x1^2 + x2^2 over [0, 5] is 215/3 + 5
  const auto p = benchmarks::di_lqr(5.0);
  const auto pc = constant_controller(p, 0.0);
  const auto traj = execute(p, pc);
  EXPECT_EQ(traj.reason, TerminalReason::Horizon);
  EXPECT_TRUE(traj.events.empty());
  const double expected = 215.0 / 3.0 + 5.0;
  EXPECT_NEAR(traj.cost, expected, 1e-7);
  // tightening the integrator tolerances must not move the cost
  SimOptions tight;
  tight.rel_tol = 1e-10;
  tight.abs_tol = 1e-12;
  const auto traj2 = execute(p, pc, tight);
  EXPECT_NEAR(traj.cost, traj2.cost, 1e-5);
}

TEST(Execute, StabilizingFeedbackCrossesGuardOnce) {
  const auto p = benchmarks::di_mintime();
  const auto pc = make_controller(p, [](const Mode&, const VarSpace& sp, int) {
    return Polynomial::variable(sp, 1) * -1.0 + Polynomial::variable(sp, 2) * -2.0;
  });
  const auto traj = execute(p, pc);
  ASSERT_EQ(traj.events.size(), 1u);
  const auto& ev = traj.events[0];
  EXPECT_EQ(p.edges[ev.edge].from, "2");
  EXPECT_EQ(p.edges[ev.edge].to, "1");
  // refined crossing sits on the guard circle, and the identity reset is exact
  const double g = ev.pre_state[0] * ev.pre_state[0] + ev.pre_state[1] * ev.pre_state[1] - 0.3;
  EXPECT_LE(std::abs(g), 1e-10);
  EXPECT_EQ(ev.pre_state, ev.post_state);
  EXPECT_EQ(traj.terminal_mode, p.mode_index("1"));
  ASSERT_TRUE(traj.reason == TerminalReason::TargetReached ||
              traj.reason == TerminalReason::ClosestApproach);
  if (traj.reason == TerminalReason::ClosestApproach) {
    const double d = std::hypot(traj.terminal_state[0], traj.terminal_state[1]);
    EXPECT_NEAR(d, traj.closest_distance, 1e-7);
  }
  EXPECT_LE(traj.cost, 5.0);
  // the run is deterministic
  const auto again = execute(p, pc);
  EXPECT_EQ(traj.cost, again.cost);
  EXPECT_EQ(traj.terminal_time, again.terminal_time);
}

TEST(Moments, TransportIdentityMinimumTime) {
  const auto p = benchmarks::di_mintime();
  const auto pc = make_controller(p, [](const Mode&, const VarSpace& sp, int) {
    return Polynomial::variable(sp, 1) * -1.0 + Polynomial::variable(sp, 2) * -2.0;
  });
  const auto traj = execute(p, pc);
  const auto rx = build_relaxation(p, 6);
  const auto em = empirical_moments(traj, rx);
  ASSERT_TRUE(em.terminal_representable);
  EXPECT_LE(sup_residual(rx, em.y), 1e-6);
  // objective functional of the empirical moments equals the simulated cost
  EXPECT_NEAR(rx.c.dot(em.y), traj.cost, 1e-6);
  // one crossing carries unit mass on the guard measure
  EXPECT_DOUBLE_EQ(em.y[rx.offset[rx.guard_of[traj.events[0].edge]]], 1.0);
  // unit terminal mass in the target mode
  EXPECT_DOUBLE_EQ(em.y[rx.offset[rx.term_of[traj.terminal_mode]]], 1.0);
  // occupation masses add up to the dwell fraction of the horizon
  double mass = 0.0;
  for (std::size_t i = 0; i < p.modes.size(); ++i) mass += em.y[rx.offset[rx.occ_of[i]]];
  EXPECT_NEAR(mass, traj.terminal_time / p.horizon.T, 1e-8);
}

TEST(Moments, TransportIdentityRandomizedControllers) {
  const auto p = benchmarks::di_lqr(5.0);
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> coef(-0.3, 0.3);
  for (int trial = 0; trial < 3; ++trial) {
    const auto pc = make_controller(p, [&](const Mode&, const VarSpace& sp, int) {
      return Polynomial::constant(sp, coef(rng)) + Polynomial::variable(sp, 0) * coef(rng) +
             Polynomial::variable(sp, 1) * coef(rng) + Polynomial::variable(sp, 2) * coef(rng);
    });
    const auto traj = execute(p, pc);
    ASSERT_EQ(traj.reason, TerminalReason::Horizon) << "trial " << trial;
    const int order = trial == 0 ? 6 : 4;
    const auto rx = build_relaxation(p, order);
    const auto em = empirical_moments(traj, rx);
    ASSERT_TRUE(em.terminal_representable);
    EXPECT_LE(sup_residual(rx, em.y), 1e-6) << "trial " << trial << " order " << order;
    EXPECT_NEAR(rx.c.dot(em.y), traj.cost, 1e-6) << "trial " << trial;
  }
}

TEST(Moments, TransportIdentityAcrossHops) {
  // gentle drop of the hopper: touchdown, stance with a light push, liftoff,
  // and the apex crossing, all inside the mode domains
  auto p = benchmarks::slip_height();
  p.x0 = {-1.0, 0.1, 0.18, 0.0};
  const auto pc = constant_controller(p, 0.02);
  const auto traj = execute(p, pc);
  ASSERT_GE(traj.events.size(), 3u);
  EXPECT_EQ(p.edges[traj.events[0].edge].from, "3");  // touchdown
  EXPECT_EQ(p.edges[traj.events[1].edge].from, "1");  // liftoff
  EXPECT_EQ(p.edges[traj.events[2].edge].from, "2");  // apex
  EXPECT_EQ(traj.reason, TerminalReason::Horizon);
  const auto rx = build_relaxation(p, 4);
  const auto em = empirical_moments(traj, rx);
  ASSERT_TRUE(em.terminal_representable);
  EXPECT_LE(sup_residual(rx, em.y), 1e-6);
  EXPECT_NEAR(rx.c.dot(em.y), traj.cost, 1e-6);
}

TEST(Moments, TerminalMassNeedsATargetMode) {
  // braking forever never enters the guard circle: the run ends at the
  // horizon in a mode without a terminal measure
  const auto p = benchmarks::di_mintime();
  const auto traj = execute(p, constant_controller(p, -1.0));
  EXPECT_EQ(traj.reason, TerminalReason::Horizon);
  EXPECT_NEAR(traj.terminal_time, 5.0, 1e-12);
  EXPECT_NEAR(traj.terminal_state[1], -4.0, 1e-8);  // x2 = 1 - t
  const auto rx = build_relaxation(p, 4);
  const auto em = empirical_moments(traj, rx);
  EXPECT_FALSE(em.terminal_representable);
}
