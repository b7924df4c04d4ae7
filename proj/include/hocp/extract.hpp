#pragma once

// Feedback-controller synthesis from a solved moment relaxation.
//
// In each mode the occupation measure disintegrates into a (t, x)-marginal
// and a conditional control distribution; the best polynomial approximation
// of the conditional mean control solves a linear system whose matrix is
// the (t, x)-moment matrix of the occupation measure and whose right-hand
// side pairs each (t, x) test monomial with one control channel. Solving it
// with a truncated pseudoinverse gives one polynomial u_j(t, x) of degree
// <= k per mode and channel. Controllers are mapped back to original
// coordinates when the relaxation was assembled in normalized ones, and are
// hard-clamped into the mode's control box at evaluation time.

#include <algorithm>
#include <array>
#include <utility>

#include "hocp/relax.hpp"

namespace hocp {

// One mode's feedback law: a polynomial per control channel over the mode's
// (t, x) space in original coordinates, clamped into `saturation` when
// evaluated.
struct ModeController {
  std::string mode_id;
  VarSpace space;  // (t, x) of the mode, original coordinates
  std::vector<Polynomial> channels;
  std::vector<std::array<double, 2>> saturation;
};

struct PolyController {
  int order_2k = 0;
  std::vector<ModeController> modes;
};

// Linear system M * vec(u_j) = b for one control channel: M is the (t, x)
// moment matrix of the measure (control exponents zero) over monomials of
// degree <= k, and b_r = L_y(m_r(t, x) * u_j).
inline std::pair<Eigen::MatrixXd, Eigen::VectorXd> build_extraction_system(const MomentVector& y,
                                                                           int channel, int k) {
  std::vector<int> txpos, upos;
  for (int v = 0; v < y.space.dim(); ++v)
    (y.space.roles[v] == VarRole::Control ? upos : txpos).push_back(v);
  if (channel < 0 || channel >= static_cast<int>(upos.size()))
    throw Error("build_extraction_system: control channel out of range");
  if (2 * k > y.order_2k || k + 1 > y.order_2k)
    throw Error("build_extraction_system: moment vector of order " + std::to_string(y.order_2k) +
                " cannot support extraction at order " + std::to_string(k));
  const auto tx = monomials_up_to(static_cast<int>(txpos.size()), k);
  const int side = static_cast<int>(tx.size());
  const auto idx = build_index(monomials_up_to(y.space.dim(), y.order_2k));

  Eigen::MatrixXd M(side, side);
  Eigen::VectorXd b(side);
  Expo full(y.space.dim(), 0);
  for (int r = 0; r < side; ++r) {
    for (int c = r; c < side; ++c) {
      std::fill(full.begin(), full.end(), 0);
      for (std::size_t p = 0; p < txpos.size(); ++p) full[txpos[p]] = tx[r][p] + tx[c][p];
      M(r, c) = M(c, r) = y.y[idx.at(full)];
    }
    std::fill(full.begin(), full.end(), 0);
    for (std::size_t p = 0; p < txpos.size(); ++p) full[txpos[p]] = tx[r][p];
    full[upos[channel]] = 1;
    b[r] = y.y[idx.at(full)];
  }
  return {std::move(M), std::move(b)};
}

// Minimum-norm least-squares solution of M x = b through a symmetric
// eigendecomposition, discarding eigenvalues below cutoff * lambda_max.
// A zero matrix yields the zero vector.
inline Eigen::VectorXd solve_extraction(const Eigen::MatrixXd& M, const Eigen::VectorXd& b,
                                        double cutoff = 1e-8) {
  if (M.rows() != M.cols() || M.rows() != b.size())
    throw Error("solve_extraction: dimension mismatch");
  if (b.size() == 0) return Eigen::VectorXd();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (M + M.transpose()));
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double lmax = ev[ev.size() - 1];  // ascending order
  if (ev[0] < -1e-8 * std::max(1.0, lmax))
    throw Error("solve_extraction: moment matrix is indefinite (min eigenvalue " +
                std::to_string(ev[0]) + ")");
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] > 0.0 && ev[i] >= cutoff * lmax)
      x += (es.eigenvectors().col(i).dot(b) / ev[i]) * es.eigenvectors().col(i);
  return x;
}

// Extraction for one mode from the (normalized-coordinate) occupation
// moments: per channel, fit the polynomial in normalized variables, then
// substitute the normalization maps to express it over the original (t, x)
// space and unscale its value. A measure with (numerically) no mass gets
// the zero polynomial on every channel.
inline ModeController extract_mode_controller(const MomentVector& y_scaled, const Mode& mode,
                                              const ScalingRecord& scaling, int mode_index, int k,
                                              double cutoff = 1e-8) {
  ModeController mc;
  mc.mode_id = mode.id;
  mc.space = mode.timed_state_space();
  mc.saturation = mode.control_box;

  const auto& ms = scaling.modes[mode_index];
  std::vector<Polynomial> fwd;  // original (t, x) -> normalized (t, x), componentwise
  fwd.push_back(Polynomial::variable(mc.space, 0) * (1.0 / scaling.time_scale));
  for (int j = 0; j < mode.state_dim(); ++j)
    fwd.push_back(Polynomial::variable(mc.space, 1 + j) * ms.state[j].a + ms.state[j].b);

  const double mass = y_scaled.y.size() > 0 ? y_scaled.y[0] : 0.0;
  const auto tx = monomials_up_to(1 + mode.state_dim(), k);
  for (int j = 0; j < mode.control_dim(); ++j) {
    if (mass <= 1e-9) {
      mc.channels.emplace_back(mc.space);
      continue;
    }
    const auto [M, b] = build_extraction_system(y_scaled, j, k);
    const Eigen::VectorXd coef = solve_extraction(M, b, cutoff);
    Polynomial us(mc.space);  // normalized-coordinate fit, variables shared by name
    for (int r = 0; r < coef.size(); ++r)
      if (coef[r] != 0.0) us = us + Polynomial::monomial(mc.space, tx[r], coef[r]);
    const Polynomial ug = compose(us, mc.space, fwd);
    const auto& cm = ms.control[j];
    mc.channels.push_back(ug * (1.0 / cm.a) + (-cm.b / cm.a));
  }
  return mc;
}

// Controllers for every mode of a solved relaxation.
inline PolyController extract_controller(const ConicSolution& sol, const Relaxation& rx,
                                         double cutoff = 1e-8) {
  if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::NearOptimal)
    throw Error(std::string("extract_controller: solution status ") + to_string(sol.status) +
                " does not provide usable moments");
  const int k = rx.order_2k / 2;
  PolyController pc;
  pc.order_2k = rx.order_2k;
  for (std::size_t i = 0; i < rx.problem.modes.size(); ++i)
    pc.modes.push_back(extract_mode_controller(rx.slice(sol.y, rx.occ_of[i]),
                                               rx.problem.modes[i], rx.scaling,
                                               static_cast<int>(i), k, cutoff));
  return pc;
}

// Controller evaluation: polynomial value, then componentwise clamp into the
// mode's control box.
inline std::vector<double> evaluate_control(const PolyController& pc, int mode, double t,
                                            const std::vector<double>& x) {
  if (mode < 0 || mode >= static_cast<int>(pc.modes.size()))
    throw Error("evaluate_control: mode index out of range");
  const auto& mc = pc.modes[mode];
  std::vector<double> pt{t};
  pt.insert(pt.end(), x.begin(), x.end());
  std::vector<double> u(mc.channels.size());
  for (std::size_t j = 0; j < mc.channels.size(); ++j)
    u[j] = std::clamp(eval(mc.channels[j], pt), mc.saturation[j][0], mc.saturation[j][1]);
  return u;
}

}  // namespace hocp
