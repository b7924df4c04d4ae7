#pragma once

// Closed-loop simulation of a hybrid problem under a polynomial feedback
// law, and empirical truncated moments of the executed trajectory.
//
// Each mode segment is integrated with an adaptive dense-output RK45
// stepper. Along the dense solution the simulator monitors every outgoing
// guard equality (armed once the value clearly leaves zero, so a segment
// may start on a guard surface), the mode's domain inequalities, and — for
// free-horizon problems — the mode's target set. Sign changes are refined
// by bisection until the guard equality is below the event tolerance, side
// conditions are checked at the refined point, and the earliest valid
// crossing wins; a guard beats a domain exit at the same instant because
// guards usually live on the domain boundary. Running cost and trajectory
// moments are accumulated with Gauss-Legendre panels that are split where
// a control channel crosses its saturation bound, so every panel integrand
// is smooth.
//
// Termination: fixed horizons stop at T. Free-horizon runs stop when the
// target is entered; a thin (equality-constrained) target that is never
// approached closer than the acceptance radius truncates the run at the
// recorded closest-approach time instead. Leaving a domain with no guard
// to cross stops the run, as does exceeding the transition cap.

#include <array>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/numeric/odeint.hpp>
#include <limits>

#include "hocp/extract.hpp"

namespace hocp {

enum class TerminalReason { Horizon, TargetReached, ClosestApproach, DomainExit, ZenoCap };

inline const char* to_string(TerminalReason r) {
  switch (r) {
    case TerminalReason::Horizon: return "Horizon";
    case TerminalReason::TargetReached: return "TargetReached";
    case TerminalReason::ClosestApproach: return "ClosestApproach";
    case TerminalReason::DomainExit: return "DomainExit";
    case TerminalReason::ZenoCap: return "ZenoCap";
  }
  return "?";
}

struct SimOptions {
  double rel_tol = 1e-9;         // ODE relative tolerance
  double abs_tol = 1e-11;        // ODE absolute tolerance
  double event_tol = 1e-10;      // |guard equality| at a refined crossing
  double side_tol = 1e-9;        // slack for inequalities at events/targets
  double target_radius = 1e-3;   // acceptance ball around thin targets
  int zeno_cap = 50;             // maximum number of transitions
  double scan_frac = 1.0 / 2048; // sign-sampling spacing as a horizon fraction
  double panel_frac = 1.0 / 64;  // max quadrature panel width, horizon fraction
};

// One Gauss-Legendre node of the running-cost/moment quadrature; the weight
// already includes the panel width.
struct QuadNode {
  double t = 0.0, w = 0.0;
  std::vector<double> x, u;
};

struct TrajectorySegment {
  int mode = 0;
  std::vector<double> times;  // panel-boundary sample grid
  std::vector<std::vector<double>> states, controls;
  std::vector<double> cum_cost;  // accumulated running cost at `times`
  std::vector<QuadNode> quad;
};

struct TransitionEvent {
  double time = 0.0;
  int edge = -1;
  std::vector<double> pre_state, post_state;  // post = reset image of pre
};

struct HybridTrajectory {
  std::vector<TrajectorySegment> segments;
  std::vector<TransitionEvent> events;
  int terminal_mode = 0;
  double terminal_time = 0.0;
  std::vector<double> terminal_state;
  TerminalReason reason = TerminalReason::Horizon;
  double running_cost = 0.0, terminal_value = 0.0, cost = 0.0;
  double closest_distance = std::numeric_limits<double>::infinity();
  std::string message;

  std::vector<int> mode_sequence() const {
    std::vector<int> seq;
    for (const auto& s : segments)
      if (seq.empty() || seq.back() != s.mode) seq.push_back(s.mode);
    return seq;
  }
};

namespace simdetail {

inline void gl12(double a, double b, std::array<double, 12>& t, std::array<double, 12>& w) {
  using G = boost::math::quadrature::gauss<double, 12>;
  const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
  for (int i = 0; i < 6; ++i) {
    t[2 * i] = mid - half * G::abscissa()[i];
    t[2 * i + 1] = mid + half * G::abscissa()[i];
    w[2 * i] = w[2 * i + 1] = half * G::weights()[i];
  }
}

// Bisection of a scalar function with a sign change on [a, b]; returns the
// abscissa where |f| <= ftol (or the bracket collapses).
template <typename F>
double bisect(F&& f, double a, double b, double fa, double ftol) {
  double fbest = fa, tbest = a;
  for (int it = 0; it < 200; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = f(m);
    if (std::abs(fm) < std::abs(fbest)) {
      fbest = fm;
      tbest = m;
    }
    if (std::abs(fbest) <= ftol || (b - a) <= 1e-16 * (1.0 + std::abs(m))) break;
    if ((fa <= 0.0) == (fm <= 0.0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
    }
  }
  return tbest;
}

}  // namespace simdetail

enum class SegmentExit { TimeLimit, GuardHit, DomainExit, TargetHit, StepFail };

struct SegmentResult {
  TrajectorySegment segment;
  SegmentExit exit = SegmentExit::TimeLimit;
  int edge = -1;  // valid for GuardHit
  double t_end = 0.0;
  std::vector<double> x_end;
  // closest approach to a thin target within this segment
  double best_dist = std::numeric_limits<double>::infinity();
  double best_time = 0.0;
  std::vector<double> best_x;
  std::string message;
};

// Integrate one mode segment from (t0, x0) until the time limit, a valid
// guard crossing, a domain exit, or (free horizon) target membership.
inline SegmentResult integrate_segment(const HybridProblem& p, const PolyController& pc, int mode,
                                       double t0, const std::vector<double>& x0, double t_max,
                                       const SimOptions& opt = {}) {
  namespace ode = boost::numeric::odeint;
  using State = std::vector<double>;
  const Mode& m = p.modes[mode];
  const int n = m.state_dim();
  SegmentResult res;
  TrajectorySegment& seg = res.segment;
  seg.mode = mode;

  auto control_at = [&](double t, const State& x) { return evaluate_control(pc, mode, t, x); };
  auto record_sample = [&](double t, const State& x, double cum) {
    seg.times.push_back(t);
    seg.states.push_back(x);
    seg.controls.push_back(control_at(t, x));
    seg.cum_cost.push_back(cum);
  };

  record_sample(t0, x0, 0.0);
  if (!(t_max - t0 > 1e-15 * (1.0 + std::abs(t_max)))) {  // zero-length segment
    res.t_end = t0;
    res.x_end = x0;
    return res;
  }

  auto sys = [&](const State& x, State& dxdt, double t) {
    const auto u = control_at(t, x);
    std::vector<double> pt;
    pt.reserve(1 + n + static_cast<int>(u.size()));
    pt.push_back(t);
    pt.insert(pt.end(), x.begin(), x.end());
    pt.insert(pt.end(), u.begin(), u.end());
    for (int j = 0; j < n; ++j) dxdt[j] = eval(m.dynamics[j], pt);
  };

  // Monitors. Guard equalities and the domain arm once clearly off zero so
  // a segment may begin on a surface without firing immediately.
  struct Monitor {
    int edge;
    bool armed = false;
    double prev = 0.0;
  };
  std::vector<Monitor> guards;
  for (std::size_t e = 0; e < p.edges.size(); ++e)
    if (p.edges[e].from == m.id) guards.push_back({static_cast<int>(e)});
  auto guard_val = [&](int edge, const State& x) { return eval(p.edges[edge].guard.eq[0], x); };
  auto domain_val = [&](const State& x) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& g : m.domain.ineq) d = std::min(d, eval(g, x));
    return d;
  };
  const bool has_domain = !m.domain.ineq.empty();
  bool dom_armed = false;
  const double arm_tol = 1e-9;
  for (auto& g : guards) {
    g.prev = guard_val(g.edge, x0);
    g.armed = std::abs(g.prev) > arm_tol;
  }
  double dom_prev = has_domain ? domain_val(x0) : 1.0;
  if (has_domain) dom_armed = dom_prev > arm_tol;

  // Target monitoring on free horizons only.
  const bool thin_target = p.horizon.free && m.target && !m.target->eq.empty();
  const bool fat_target = p.horizon.free && m.target && m.target->eq.empty();
  auto target_dist = [&](const State& x) {
    double s = 0.0;
    for (const auto& g : m.target->eq) {
      const double v = eval(g, x);
      s += v * v;
    }
    return std::sqrt(s);
  };
  auto target_ineq_ok = [&](const State& x) {
    for (const auto& g : m.target->ineq)
      if (eval(g, x) < -opt.side_tol) return false;
    return true;
  };
  double tgt_prev = thin_target ? target_dist(x0) : 0.0;
  if (thin_target && tgt_prev < res.best_dist && target_ineq_ok(x0)) {
    res.best_dist = tgt_prev;
    res.best_time = t0;
    res.best_x = x0;
  }
  if ((thin_target && tgt_prev <= opt.target_radius && target_ineq_ok(x0)) ||
      (fat_target && in_set(*m.target, x0, opt.side_tol))) {
    res.exit = SegmentExit::TargetHit;
    res.t_end = t0;
    res.x_end = x0;
    return res;
  }

  auto stepper = ode::make_dense_output(opt.abs_tol, opt.rel_tol, ode::runge_kutta_dopri5<State>());
  const double h_scan = p.horizon.T * opt.scan_frac;
  const double h_panel = p.horizon.T * opt.panel_frac;
  stepper.initialize(x0, t0, std::min(h_panel, (t_max - t0) * 1e-3 + 1e-12));

  State xs(n);
  auto interp = [&](double t) -> const State& {
    stepper.calc_state(t, xs);
    return xs;
  };

  struct Candidate {
    double t;
    int kind;  // 0 guard, 1 domain exit, 2 target entry
    int edge;
    State x;
  };

  double cum = 0.0;
  std::vector<double> cuts;
  res.exit = SegmentExit::TimeLimit;
  res.t_end = t_max;
  bool done = false;
  long steps = 0;
  while (!done) {
    double ts0, ts1;
    try {
      auto iv = stepper.do_step(sys);
      ts0 = iv.first;
      ts1 = iv.second;
    } catch (const std::exception& ex) {
      res.exit = SegmentExit::StepFail;
      res.message = std::string("integrator stopped: ") + ex.what();
      res.t_end = seg.times.back();
      res.x_end = seg.states.back();
      return res;
    }
    if (++steps > 2000000 || ts1 - ts0 < 1e-14 * (1.0 + std::abs(ts1))) {
      res.exit = SegmentExit::StepFail;
      res.message = "integrator stopped: step size underflow";
      res.t_end = seg.times.back();
      res.x_end = seg.states.back();
      return res;
    }
    const double tw = std::min(ts1, t_max);

    // --- scan for events over [ts0, tw]
    std::vector<Candidate> cands;
    const int ns = std::max(1, static_cast<int>(std::ceil((tw - ts0) / h_scan)));
    int stop_after = -1;  // scan one extra interval once a candidate exists
    double tq_prev = ts0;
    for (int q = 1; q <= ns; ++q) {
      if (stop_after >= 0 && q > stop_after) break;
      const double tq = ts0 + (tw - ts0) * q / ns;
      const State xq = interp(tq);  // copy: bisections below reuse the buffer
      for (auto& g : guards) {
        const double v = guard_val(g.edge, xq);
        if (!g.armed) {
          if (std::abs(v) > arm_tol) {
            g.armed = true;
            g.prev = v;
          }
          continue;
        }
        if ((g.prev <= 0.0) != (v <= 0.0) || v == 0.0) {
          const int edge = g.edge;
          const double tc = simdetail::bisect(
              [&](double t) { return guard_val(edge, interp(t)); }, tq_prev, tq, g.prev,
              opt.event_tol);
          State xc = interp(tc);
          bool valid = true;
          for (std::size_t j = 1; j < p.edges[edge].guard.eq.size(); ++j)
            if (std::abs(eval(p.edges[edge].guard.eq[j], xc)) > 1e-8) valid = false;
          for (const auto& gi : p.edges[edge].guard.ineq)
            if (eval(gi, xc) < -opt.side_tol) valid = false;
          if (valid) cands.push_back({tc, 0, edge, std::move(xc)});
        }
        g.prev = v;
      }
      if (has_domain) {
        const double d = domain_val(xq);
        if (!dom_armed) {
          if (d > arm_tol) {
            dom_armed = true;
          } else if (d < -1e-6) {  // started outside and clearly diverging
            cands.push_back({tq, 1, -1, xq});
          }
        } else if (d < 0.0 && dom_prev >= 0.0) {
          const double tc = simdetail::bisect([&](double t) { return domain_val(interp(t)); },
                                              tq_prev, tq, dom_prev, opt.event_tol);
          cands.push_back({tc, 1, -1, interp(tc)});
        }
        dom_prev = d;
      }
      if (thin_target) {
        const double d = target_dist(xq);
        if (d < res.best_dist && target_ineq_ok(xq)) {
          res.best_dist = d;
          res.best_time = tq;
          res.best_x = xq;
        }
        if (d <= opt.target_radius && tgt_prev > opt.target_radius) {
          const double tc = simdetail::bisect(
              [&](double t) { return target_dist(interp(t)) - opt.target_radius; }, tq_prev, tq,
              tgt_prev - opt.target_radius, 1e-12);
          const State xc = interp(tc);
          if (target_ineq_ok(xc)) cands.push_back({tc, 2, -1, xc});
        }
        tgt_prev = d;
      } else if (fat_target && in_set(*m.target, xq, opt.side_tol)) {
        cands.push_back({tq, 2, -1, xq});
      }
      if (!cands.empty() && stop_after < 0) stop_after = q + 1;
      tq_prev = tq;
    }

    // --- resolve the earliest candidate; guards beat coincident domain exits
    double t_seg_end = tw;
    if (!cands.empty()) {
      const double inf = std::numeric_limits<double>::infinity();
      double tg = inf, td = inf, tt = inf;
      const Candidate* cg = nullptr;
      for (const auto& c : cands) {
        if (c.kind == 0 && c.t < tg) {
          tg = c.t;
          cg = &c;
        }
        if (c.kind == 1) td = std::min(td, c.t);
        if (c.kind == 2) tt = std::min(tt, c.t);
      }
      for (const auto& c : cands)
        if (c.kind == 0 && cg && c.edge != cg->edge && std::abs(c.t - tg) <= 1e-10)
          throw Error("simultaneous guard crossings of edges " +
                      p.edges[cg->edge].from + "->" + p.edges[cg->edge].to + " and " +
                      p.edges[c.edge].from + "->" + p.edges[c.edge].to + " at t=" +
                      std::to_string(tg));
      const bool guard_wins = cg && tg <= td + 1e-7 && tg <= tt;
      const Candidate* win = nullptr;
      if (guard_wins) {
        win = cg;
      } else {
        for (const auto& c : cands)
          if (c.t == std::min({tg, td, tt}) && (!win || c.t < win->t)) win = &c;
      }
      res.exit = win->kind == 0   ? SegmentExit::GuardHit
                 : win->kind == 1 ? SegmentExit::DomainExit
                                  : SegmentExit::TargetHit;
      res.edge = win->edge;
      res.t_end = win->t;
      res.x_end = win->x;
      t_seg_end = win->t;
      done = true;
    } else if (ts1 >= t_max) {
      res.exit = SegmentExit::TimeLimit;
      res.t_end = t_max;
      res.x_end = interp(t_max);
      done = true;
    }

    // --- quadrature panels over [ts0, t_seg_end], split at saturation kinks
    if (t_seg_end > ts0) {
      cuts.clear();
      const int base = std::max(1, static_cast<int>(std::ceil((t_seg_end - ts0) / h_panel)));
      for (int q = 0; q <= base; ++q) cuts.push_back(ts0 + (t_seg_end - ts0) * q / base);
      const auto& mc = pc.modes[mode];
      std::vector<double> kinks;
      for (std::size_t c = 0; c < mc.channels.size(); ++c) {
        if (mc.channels[c].degree() < 1) continue;
        for (const double bound : {mc.saturation[c][0], mc.saturation[c][1]}) {
          auto margin = [&](double t) {
            const State& x = interp(t);
            std::vector<double> pt;
            pt.reserve(1 + n);
            pt.push_back(t);
            pt.insert(pt.end(), x.begin(), x.end());
            return eval(mc.channels[c], pt) - bound;
          };
          for (std::size_t q = 0; q + 1 < cuts.size(); ++q) {
            double a = cuts[q], fa = margin(a);
            const int sub = 4;
            for (int s = 1; s <= sub; ++s) {
              const double b2 = cuts[q] + (cuts[q + 1] - cuts[q]) * s / sub;
              const double fb = margin(b2);
              if ((fa <= 0.0) != (fb <= 0.0))
                kinks.push_back(simdetail::bisect(margin, a, b2, fa, 1e-13));
              a = b2;
              fa = fb;
            }
          }
        }
      }
      cuts.insert(cuts.end(), kinks.begin(), kinks.end());
      std::sort(cuts.begin(), cuts.end());
      for (std::size_t q = 0; q + 1 < cuts.size(); ++q) {
        const double a = cuts[q], b = cuts[q + 1];
        if (!(b - a > 1e-15 * (1.0 + std::abs(b)))) continue;
        std::array<double, 12> tn, wn;
        simdetail::gl12(a, b, tn, wn);
        double pcost = 0.0;
        for (int i = 0; i < 12; ++i) {
          QuadNode node;
          node.t = tn[i];
          node.w = wn[i];
          node.x = interp(tn[i]);
          node.u = control_at(tn[i], node.x);
          std::vector<double> pt;
          pt.reserve(1 + n + static_cast<int>(node.u.size()));
          pt.push_back(node.t);
          pt.insert(pt.end(), node.x.begin(), node.x.end());
          pt.insert(pt.end(), node.u.begin(), node.u.end());
          pcost += wn[i] * eval(m.running_cost, pt);
          seg.quad.push_back(std::move(node));
        }
        cum += pcost;
        record_sample(b, interp(b), cum);
      }
    }
  }
  // land the recorded grid exactly on the refined end point
  if (!seg.times.empty() && res.x_end.size() == static_cast<std::size_t>(n)) {
    seg.times.back() = res.t_end;
    seg.states.back() = res.x_end;
    seg.controls.back() = control_at(res.t_end, res.x_end);
  }
  return res;
}

// Full closed-loop run. Returns the executed trajectory with accumulated
// cost (running + terminal). Free-horizon runs that never enter a thin
// target are truncated at the recorded closest-approach time.
inline HybridTrajectory execute(const HybridProblem& p, const PolyController& pc,
                                const SimOptions& opt = {}) {
  const bool any_thin = [&] {
    for (const auto& m : p.modes)
      if (m.target && !m.target->eq.empty()) return true;
    return false;
  }();

  auto run_once = [&](double t_limit) {
    HybridTrajectory traj;
    int mode = p.mode_index(p.x0_mode);
    std::vector<double> x = p.x0;
    double t = 0.0;
    int best_mode = -1;
    double best_time = 0.0;
    std::vector<double> best_x;
    for (;;) {
      auto res = integrate_segment(p, pc, mode, t, x, t_limit, opt);
      const double base = traj.running_cost;
      for (auto& c : res.segment.cum_cost) c += base;
      traj.running_cost = res.segment.cum_cost.back();
      traj.segments.push_back(std::move(res.segment));
      if (res.best_dist < traj.closest_distance) {
        traj.closest_distance = res.best_dist;
        best_mode = mode;
        best_time = res.best_time;
        best_x = res.best_x;
      }
      if (!res.message.empty()) traj.message = res.message;
      if (res.exit == SegmentExit::GuardHit) {
        const Edge& e = p.edges[res.edge];
        std::vector<double> post(e.reset.size());
        for (std::size_t j = 0; j < e.reset.size(); ++j) post[j] = eval(e.reset[j], res.x_end);
        traj.events.push_back({res.t_end, res.edge, res.x_end, post});
        mode = p.mode_index(e.to);
        x = std::move(post);
        t = res.t_end;
        if (static_cast<int>(traj.events.size()) >= opt.zeno_cap) {
          traj.reason = TerminalReason::ZenoCap;
          traj.terminal_mode = mode;
          traj.terminal_time = t;
          traj.terminal_state = x;
          break;
        }
        continue;
      }
      traj.terminal_mode = mode;
      traj.terminal_time = res.t_end;
      traj.terminal_state = res.x_end;
      switch (res.exit) {
        case SegmentExit::TargetHit: traj.reason = TerminalReason::TargetReached; break;
        case SegmentExit::DomainExit:
        case SegmentExit::StepFail: traj.reason = TerminalReason::DomainExit; break;
        default: traj.reason = TerminalReason::Horizon; break;
      }
      break;
    }
    traj.terminal_value =
        eval(p.modes[traj.terminal_mode].terminal_cost, traj.terminal_state);
    traj.cost = traj.running_cost + traj.terminal_value;
    struct Best {
      int mode;
      double time;
      std::vector<double> x;
    };
    return std::pair<HybridTrajectory, Best>{std::move(traj), {best_mode, best_time, best_x}};
  };

  auto [traj, best] = run_once(p.horizon.T);
  const bool want_rewind = p.horizon.free && any_thin &&
                           (traj.reason == TerminalReason::Horizon ||
                            traj.reason == TerminalReason::DomainExit) &&
                           best.mode >= 0;
  if (!want_rewind) return traj;
  if (best.time < traj.terminal_time - 1e-12 * (1.0 + traj.terminal_time)) {
    const double keep_dist = traj.closest_distance;
    auto [cut, b2] = run_once(best.time);
    cut.reason = TerminalReason::ClosestApproach;
    cut.closest_distance = keep_dist;
    return cut;
  }
  traj.reason = TerminalReason::ClosestApproach;
  return traj;
}

// ---------------------------------------------------------------------------
// Empirical moments

// Truncated moments of the executed trajectory's measure family, in the
// relaxation's normalized coordinates: occupation moments by the stored
// quadrature nodes (time rescaled so each mode's mass is its dwell fraction
// of the horizon), one unit point mass per guard crossing, and a unit point
// mass at the terminal state. The terminal measure of a fixed-horizon
// relaxation lives at t = T exactly, so a run that stopped early cannot be
// represented; `terminal_representable` reports this (and is also false
// when the final mode has no terminal measure at all).
struct EmpiricalMoments {
  Eigen::VectorXd y;
  bool terminal_representable = true;
};

inline EmpiricalMoments empirical_moments(const HybridTrajectory& traj, const Relaxation& rx) {
  if (rx.order_2k > 16) throw Error("empirical_moments: relaxation order above 16 unsupported");
  EmpiricalMoments out;
  out.y = Eigen::VectorXd::Zero(rx.total_len);
  const ScalingRecord& rec = rx.scaling;
  const double Ts = rec.time_scale;

  auto add_point = [&](int measure, const std::vector<double>& vals, double w) {
    const auto& basis = rx.basis[measure];
    const int dim = static_cast<int>(vals.size());
    std::vector<std::array<double, 17>> pw(dim);
    for (int v = 0; v < dim; ++v) {
      pw[v][0] = 1.0;
      for (int d = 1; d <= rx.order_2k; ++d) pw[v][d] = pw[v][d - 1] * vals[v];
    }
    const int off = rx.offset[measure];
    for (std::size_t b = 0; b < basis.size(); ++b) {
      double m = w;
      for (int v = 0; v < dim; ++v)
        if (basis[b][v] > 0) m *= pw[v][basis[b][v]];
      out.y[off + static_cast<int>(b)] += m;
    }
  };

  for (const auto& seg : traj.segments) {
    const int mi = rx.occ_of[seg.mode];
    const auto& ms = rec.modes[seg.mode];
    const int n = static_cast<int>(ms.state.size());
    std::vector<double> vals(1 + n + ms.control.size());
    for (const auto& node : seg.quad) {
      vals[0] = node.t / Ts;
      for (int j = 0; j < n; ++j) vals[1 + j] = apply(ms.state[j], node.x[j]);
      for (std::size_t c = 0; c < ms.control.size(); ++c)
        vals[1 + n + c] = apply(ms.control[c], node.u[c]);
      add_point(mi, vals, node.w / Ts);
    }
  }

  for (const auto& ev : traj.events) {
    const int gi = rx.guard_of[ev.edge];
    const int src = rx.measures[gi].mode;
    const auto& ms = rec.modes[src];
    std::vector<double> vals(1 + ev.pre_state.size());
    vals[0] = ev.time / Ts;
    for (std::size_t j = 0; j < ev.pre_state.size(); ++j)
      vals[1 + j] = apply(ms.state[j], ev.pre_state[j]);
    add_point(gi, vals, 1.0);
  }

  const int ti = rx.term_of[traj.terminal_mode];
  if (ti < 0) {
    out.terminal_representable = false;
    return out;
  }
  const auto& ms = rec.modes[traj.terminal_mode];
  const bool fixed = !rx.problem.horizon.free;
  if (fixed &&
      std::abs(traj.terminal_time - rx.problem.horizon.T) > 1e-9 * (1.0 + rx.problem.horizon.T))
    out.terminal_representable = false;
  std::vector<double> vals;
  if (!fixed) vals.push_back(traj.terminal_time / Ts);
  for (std::size_t j = 0; j < traj.terminal_state.size(); ++j)
    vals.push_back(apply(ms.state[j], traj.terminal_state[j]));
  add_point(ti, vals, 1.0);
  return out;
}

}  // namespace hocp
