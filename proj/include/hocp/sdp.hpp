#pragma once

// Self-contained solver for block-PSD semidefinite programs with linear
// equality constraints:
//
//     min c'y   s.t.   A y = b,   S_j(y) = C_j + sum_l y_l A_{jl}  PSD.
//
// Two stages:
//
//  * presolve — exact structural reductions. Opposite block pairs
//    (S and -S both required PSD) are rewritten as entrywise equalities;
//    single-entry rows fix variables; identically-zero block diagonals
//    force their rows to zero and are removed; finally a rank-revealing QR
//    drops dependent equality rows and certifies b in range(A) or reports
//    infeasibility. Moment relaxations of problems whose measures live on
//    varieties need these steps: without them no strictly interior point
//    exists and a path-following method cannot reach tight tolerances.
//
//  * an infeasible-start primal-dual path-following method with
//    Nesterov-Todd scaling and a Mehrotra predictor-corrector step. The
//    Newton system is reduced to a Schur complement on the equality
//    multipliers; the Hessian is block-diagonal across groups of variables
//    that never share a PSD block (one group per measure in our use), so
//    its factorization is a sequence of modest dense Cholesky solves.
//    Directions along which no block moves (facial rotation creates them)
//    make the Hessian structurally singular; they are carried as free
//    unknowns through a bordered Schur system instead of being ridged away.
//
// Determinism: fixed initial point, no randomized pivoting, single
// in-order reductions; the iterate sequence is reproducible bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "hocp/conic.hpp"

namespace hocp {

namespace sdp_detail {
// Diagnostic trace to stderr, enabled by setting HOCP_SDP_DEBUG; costs one
// branch per use when off.
inline bool debug_enabled() {
  static const bool on = std::getenv("HOCP_SDP_DEBUG") != nullptr;
  return on;
}
}  // namespace sdp_detail

struct SolveOptions {
  double tol_gap = 1e-8;   // relative complementarity gap for Optimal
  double tol_feas = 1e-8;  // relative residuals for Optimal
  int max_iter = 200;
  bool use_presolve = true;
  std::function<void(const IterationLog&)> trace;  // optional per-iteration hook
};

// ---------------------------------------------------------------------------
// Presolve

struct PresolveResult {
  bool infeasible = false;
  bool unbounded = false;
  std::string message;
  ConicProgram reduced;

  int n_orig = 0;
  int m_orig = 0;
  std::vector<double> fixed;           // per original var; NaN when free
  std::vector<int> free_to_orig;       // reduced var -> original var
  std::vector<int> kept_rows;          // reduced row -> extended row id (< m_orig: original)
  std::vector<int> kept_block_to_orig; // reduced block -> original block
  std::vector<std::vector<int>> block_positions;  // per reduced block: local row -> original row
  // Facial reduction: when a block is confined to a proper subspace on the
  // whole feasible set, it is rotated to S -> P' S P. Empty matrix: identity.
  std::vector<Eigen::MatrixXd> block_rotation;
  double objective_offset = 0.0;       // c . fixed-part
  Eigen::VectorXd y0;                  // least-norm solution of the reduced equalities
};

namespace sdp_detail {

struct LinRow {
  std::vector<std::pair<int, double>> entries;
  double rhs = 0.0;
  std::string label;
  bool dead = false;
};

// Signature used to detect opposite block pairs: identical sparsity with
// negated coefficients, including the constant part.
inline bool blocks_opposite(const ConicBlockSpec& a, const ConicBlockSpec& b) {
  if (a.side != b.side || a.terms.size() != b.terms.size() ||
      a.constant.size() != b.constant.size())
    return false;
  auto key = [](const BlockTerm& t) { return std::tuple(t.r, t.c, t.var); };
  auto sorted = [&](const std::vector<BlockTerm>& v) {
    auto s = v;
    std::sort(s.begin(), s.end(),
              [&](const BlockTerm& x, const BlockTerm& y) { return key(x) < key(y); });
    return s;
  };
  const auto sa = sorted(a.terms), sb = sorted(b.terms);
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (key(sa[i]) != key(sb[i]) || sa[i].coef != -sb[i].coef) return false;
  const auto ca = sorted(a.constant), cb = sorted(b.constant);
  for (std::size_t i = 0; i < ca.size(); ++i)
    if (std::tuple(ca[i].r, ca[i].c) != std::tuple(cb[i].r, cb[i].c) || ca[i].coef != -cb[i].coef)
      return false;
  return true;
}

}  // namespace sdp_detail

inline PresolveResult presolve(const ConicProgram& p, bool facial_rotation = true) {
  using sdp_detail::LinRow;
  PresolveResult pr;
  pr.n_orig = p.nvar;
  pr.m_orig = static_cast<int>(p.A.rows());
  pr.fixed.assign(p.nvar, std::numeric_limits<double>::quiet_NaN());

  std::vector<LinRow> rows;
  rows.reserve(p.A.rows());
  for (int r = 0; r < p.A.rows(); ++r) {
    LinRow lr;
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(p.A, r); it; ++it)
      lr.entries.emplace_back(it.col(), it.value());
    lr.rhs = p.b[r];
    lr.label = r < static_cast<int>(p.row_labels.size()) ? p.row_labels[r]
                                                         : "row " + std::to_string(r);
    rows.push_back(std::move(lr));
  }

  // Opposite block pairs: S and -S both PSD force S(y) = 0 entrywise.
  std::vector<bool> block_dead(p.blocks.size(), false);
  int pairs = 0;
  for (std::size_t j1 = 0; j1 < p.blocks.size(); ++j1) {
    if (block_dead[j1]) continue;
    for (std::size_t j2 = j1 + 1; j2 < p.blocks.size(); ++j2) {
      if (block_dead[j2]) continue;
      if (!sdp_detail::blocks_opposite(p.blocks[j1], p.blocks[j2])) continue;
      block_dead[j1] = block_dead[j2] = true;
      ++pairs;
      // One equality per upper-triangle entry of the affine map.
      std::map<std::pair<int, int>, LinRow> cells;
      for (const auto& t : p.blocks[j1].terms)
        cells[{t.r, t.c}].entries.emplace_back(t.var, t.coef);
      for (const auto& t : p.blocks[j1].constant) cells[{t.r, t.c}].rhs -= t.coef;
      for (auto& [rc, lr] : cells) {
        lr.label = p.blocks[j1].label + " = 0 @(" + std::to_string(rc.first) + "," +
                   std::to_string(rc.second) + ")";
        rows.push_back(std::move(lr));
      }
      break;
    }
  }

  // Fixing loop: single-entry rows pin variables; zero diagonals of blocks
  // force their rows to zero, which creates more equalities; repeat.
  std::vector<std::vector<bool>> pos_dead(p.blocks.size());
  for (std::size_t j = 0; j < p.blocks.size(); ++j) pos_dead[j].assign(p.blocks[j].side, false);
  int fixed_count = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    bool fixing = true;
    while (fixing) {
      fixing = false;
      for (auto& lr : rows) {
        if (lr.dead) continue;
        double rhs = lr.rhs;
        int live = 0, var = -1;
        double coef = 0.0;
        for (const auto& [v, cf] : lr.entries) {
          if (std::isnan(pr.fixed[v])) {
            ++live;
            var = v;
            coef = cf;
          } else {
            rhs -= cf * pr.fixed[v];
          }
        }
        if (live == 0) {
          if (std::abs(rhs) > 1e-9 * (1.0 + std::abs(lr.rhs))) {
            pr.infeasible = true;
            pr.message = "equalities are inconsistent at \"" + lr.label + "\"";
            return pr;
          }
          lr.dead = true;
        } else if (live == 1) {
          pr.fixed[var] = rhs / coef;
          ++fixed_count;
          lr.dead = true;
          fixing = changed = true;
        }
      }
    }
    // Dead diagonals: entry (r, r) identically zero over the free variables
    // makes the whole row of a PSD matrix zero.
    for (std::size_t j = 0; j < p.blocks.size(); ++j) {
      if (block_dead[j]) continue;
      const auto& blk = p.blocks[j];
      const int side = blk.side;
      // Affine entries over free vars: constants and term lists per cell.
      Eigen::MatrixXd cst = blk.constant_matrix();
      for (const auto& t : blk.terms)
        if (!std::isnan(pr.fixed[t.var])) {
          cst(t.r, t.c) += t.coef * pr.fixed[t.var];
          if (t.r != t.c) cst(t.c, t.r) += t.coef * pr.fixed[t.var];
        }
      std::vector<int> live_terms(side * side, 0);
      for (const auto& t : blk.terms)
        if (std::isnan(pr.fixed[t.var])) {
          ++live_terms[t.r * side + t.c];
          ++live_terms[t.c * side + t.r];
        }
      for (int r = 0; r < side; ++r) {
        if (pos_dead[j][r]) continue;
        if (live_terms[r * side + r] != 0 || std::abs(cst(r, r)) > 1e-12) continue;
        pos_dead[j][r] = true;
        changed = true;
        for (int c = 0; c < side; ++c) {
          if (c == r || pos_dead[j][c]) continue;
          if (live_terms[r * side + c] == 0) {
            if (std::abs(cst(r, c)) > 1e-9) {
              pr.infeasible = true;
              pr.message = "PSD block \"" + blk.label + "\" has a zero diagonal against a " +
                           "nonzero off-diagonal constant";
              return pr;
            }
            continue;
          }
          LinRow lr;
          const int lo = std::min(r, c), hi = std::max(r, c);
          for (const auto& t : blk.terms)
            if (std::isnan(pr.fixed[t.var]) && t.r == lo && t.c == hi)
              lr.entries.emplace_back(t.var, t.coef);
          lr.rhs = -cst(r, c);
          lr.label = blk.label + " zero row @(" + std::to_string(r) + "," + std::to_string(c) + ")";
          rows.push_back(std::move(lr));
        }
      }
    }
  }

  // Free-variable numbering.
  std::vector<int> var_map(p.nvar, -1);
  for (int v = 0; v < p.nvar; ++v)
    if (std::isnan(pr.fixed[v])) {
      var_map[v] = static_cast<int>(pr.free_to_orig.size());
      pr.free_to_orig.push_back(v);
    } else {
      pr.objective_offset += p.c[v] * pr.fixed[v];
    }
  // Rebuild surviving blocks over free variables.
  std::vector<bool> var_in_block(p.nvar, false);
  int dropped_positions = 0;
  for (std::size_t j = 0; j < p.blocks.size(); ++j) {
    if (block_dead[j]) continue;
    const auto& blk = p.blocks[j];
    std::vector<int> keep;
    std::vector<int> local(blk.side, -1);
    for (int r = 0; r < blk.side; ++r)
      if (!pos_dead[j][r]) {
        local[r] = static_cast<int>(keep.size());
        keep.push_back(r);
      }
    dropped_positions += blk.side - static_cast<int>(keep.size());
    if (keep.empty()) continue;
    ConicBlockSpec nb;
    nb.side = static_cast<int>(keep.size());
    nb.label = blk.label;
    std::map<std::pair<int, int>, double> consts;
    for (const auto& t : blk.constant)
      if (local[t.r] >= 0 && local[t.c] >= 0) consts[{local[t.r], local[t.c]}] += t.coef;
    for (const auto& t : blk.terms) {
      if (!std::isnan(pr.fixed[t.var])) {
        if (local[t.r] >= 0 && local[t.c] >= 0 && pr.fixed[t.var] != 0.0)
          consts[{local[t.r], local[t.c]}] += t.coef * pr.fixed[t.var];
        continue;
      }
      if (local[t.r] < 0 || local[t.c] < 0)
        continue;  // PSD forced the row to zero; the equality already exists
      nb.terms.push_back({local[t.r], local[t.c], var_map[t.var], t.coef});
      var_in_block[t.var] = true;
    }
    for (const auto& [rc, v] : consts)
      if (v != 0.0) nb.constant.push_back({rc.first, rc.second, -1, v});
    if (nb.terms.empty()) {  // constant block: check once and drop
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(nb.constant_matrix(),
                                                        Eigen::EigenvaluesOnly);
      if (es.eigenvalues().minCoeff() < -1e-9 * (1.0 + es.eigenvalues().cwiseAbs().maxCoeff())) {
        pr.infeasible = true;
        pr.message = "constant PSD block \"" + blk.label + "\" is not positive semidefinite";
        return pr;
      }
      continue;
    }
    pr.kept_block_to_orig.push_back(static_cast<int>(j));
    pr.block_positions.push_back(keep);
    pr.reduced.blocks.push_back(std::move(nb));
  }

  // A free variable outside every block and every live row is unbounded if
  // it carries an objective coefficient, and removable otherwise.
  {
    std::vector<bool> in_row(p.nvar, false);
    for (const auto& lr : rows)
      if (!lr.dead)
        for (const auto& [v, cf] : lr.entries)
          if (cf != 0.0) in_row[v] = true;
    for (int v = 0; v < p.nvar; ++v) {
      if (!std::isnan(pr.fixed[v]) || var_in_block[v] || in_row[v]) continue;
      if (p.c[v] != 0.0) {
        pr.unbounded = true;
        pr.message = "variable " + std::to_string(v) + " is unconstrained with a nonzero cost";
        return pr;
      }
      pr.fixed[v] = 0.0;  // harmless: appears nowhere
    }
  }
  // Renumber free vars once more in case the pass above fixed stragglers
  // (which by construction appear in no block, so only indices shift).
  {
    const std::vector<int> old_free = pr.free_to_orig;
    pr.free_to_orig.clear();
    std::fill(var_map.begin(), var_map.end(), -1);
    for (int v = 0; v < p.nvar; ++v)
      if (std::isnan(pr.fixed[v])) {
        var_map[v] = static_cast<int>(pr.free_to_orig.size());
        pr.free_to_orig.push_back(v);
      }
    for (auto& blk : pr.reduced.blocks)
      for (auto& t : blk.terms) t.var = var_map[old_free[t.var]];
  }

  // Live rows over free variables, then rank-revealing row selection.
  std::vector<int> live_ids;
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (!rows[r].dead) live_ids.push_back(static_cast<int>(r));
  const int mlive = static_cast<int>(live_ids.size());
  const int nred = static_cast<int>(pr.free_to_orig.size());
  Eigen::MatrixXd Ad = Eigen::MatrixXd::Zero(mlive, nred);
  Eigen::VectorXd bd(mlive);
  for (int i = 0; i < mlive; ++i) {
    const auto& lr = rows[live_ids[i]];
    double rhs = lr.rhs;
    for (const auto& [v, cf] : lr.entries) {
      if (std::isnan(pr.fixed[v]))
        Ad(i, var_map[v]) += cf;
      else
        rhs -= cf * pr.fixed[v];
    }
    bd[i] = rhs;
  }

  std::vector<int> kept_live;
  if (mlive > 0) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Ad.transpose());
    const auto& R = qr.matrixR();
    const double ref = std::abs(R(0, 0));
    const double tau = 1e-10 * std::max(ref, 1.0);
    int rank = 0;
    for (int i = 0; i < std::min<int>(R.rows(), R.cols()); ++i)
      if (std::abs(R(i, i)) > tau) ++rank;
    kept_live.assign(qr.colsPermutation().indices().data(),
                     qr.colsPermutation().indices().data() + rank);
    std::sort(kept_live.begin(), kept_live.end());
  }
  const int mkept = static_cast<int>(kept_live.size());
  Eigen::MatrixXd Ak(mkept, nred);
  Eigen::VectorXd bk(mkept);
  for (int i = 0; i < mkept; ++i) {
    Ak.row(i) = Ad.row(kept_live[i]);
    bk[i] = bd[kept_live[i]];
    pr.kept_rows.push_back(live_ids[kept_live[i]]);
  }

  // Least-norm solution of the kept rows doubles as a consistency certificate
  // for the dropped ones and as the interior-point starting value.
  pr.y0 = Eigen::VectorXd::Zero(nred);
  if (mkept > 0) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(Ak);
    pr.y0 = cod.solve(bk);
  }
  if (mlive > 0) {
    const double berr = (Ad * pr.y0 - bd).cwiseAbs().maxCoeff();
    if (berr > 1e-8 * (1.0 + bd.cwiseAbs().maxCoeff())) {
      pr.infeasible = true;
      pr.message = "right-hand side is outside the range of the equality rows (residual " +
                   std::to_string(berr) + ")";
      return pr;
    }
  }

  // Facial reduction. A block that is singular along the same directions at
  // EVERY point of {A y = b} admits no interior point, the dual optimum is
  // then unattained, and a path-following method must lose the dual residual
  // near convergence. Moment matrices of measures supported on varieties
  // {h = 0} are exactly of this kind (null vector: the coefficients of h).
  // Detection: accumulate S(y0)^2 + sum_s A(w_s)^2 over deterministic probes
  // w_s in null(A); its null space contains every common null direction.
  // Each candidate q is then *certified*: S(y0) q must vanish and every row
  // of the linear map y -> S(y) q must lie in the row space of A, which
  // together imply S(y) q = 0 on the whole affine set. Certified directions
  // are rotated away: S -> P' S P on their orthogonal complement.
  int rotated_blocks = 0, rotated_dirs = 0, zero_blocks = 0;
  pr.block_rotation.assign(pr.reduced.blocks.size(), Eigen::MatrixXd());
  if (facial_rotation && !pr.reduced.blocks.empty()) {
    const int mkept0 = static_cast<int>(kept_live.size());
    Eigen::MatrixXd AkT = Ak.transpose();
    Eigen::HouseholderQR<Eigen::MatrixXd> qrT;
    if (mkept0 > 0) qrT.compute(AkT);
    const int nprobe = 12;
    std::vector<Eigen::VectorXd> probes;
    std::mt19937 rng(0x5eed'f00dU);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int s = 0; s < nprobe; ++s) {
      Eigen::VectorXd g = Eigen::VectorXd::Zero(nred);
      for (int i = mkept0; i < nred; ++i) g[i] = gauss(rng);
      probes.push_back(mkept0 > 0 ? Eigen::VectorXd(qrT.householderQ() * g) : g);
    }
    for (std::size_t jb = 0; jb < pr.reduced.blocks.size(); ++jb) {
      auto& nb = pr.reduced.blocks[jb];
      const int d = nb.side;
      auto map_only = [&](const Eigen::VectorXd& w) {
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(d, d);
        for (const auto& t : nb.terms) {
          W(t.r, t.c) += t.coef * w[t.var];
          if (t.r != t.c) W(t.c, t.r) += t.coef * w[t.var];
        }
        return W;
      };
      const Eigen::MatrixXd S0 = nb.value(pr.y0);
      Eigen::MatrixXd Macc = S0 * S0;
      for (const auto& w : probes) {
        const Eigen::MatrixXd W = map_only(w);
        Macc += W * W;
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Macc);
      const double lmax = std::max(es.eigenvalues().maxCoeff(), 1.0);
      std::vector<int> cand;
      for (int i = 0; i < d; ++i)
        if (es.eigenvalues()[i] <= 1e-10 * lmax) cand.push_back(i);
      if (cand.empty()) continue;
      // Certification against the row space.
      const double s0_scale = 1.0 + S0.cwiseAbs().maxCoeff();
      std::vector<int> cert;
      for (const int ci : cand) {
        const Eigen::VectorXd q = es.eigenvectors().col(ci);
        if ((S0 * q).cwiseAbs().maxCoeff() > 1e-7 * s0_scale) continue;
        Eigen::MatrixXd Tq = Eigen::MatrixXd::Zero(nred, d);  // column i: row i of the map
        for (const auto& t : nb.terms) {
          Tq(t.var, t.r) += t.coef * q[t.c];
          if (t.r != t.c) Tq(t.var, t.c) += t.coef * q[t.r];
        }
        bool ok = true;
        if (mkept0 > 0) {
          const Eigen::MatrixXd X = qrT.solve(Tq);
          const Eigen::MatrixXd R = Tq - AkT * X;
          for (int i = 0; ok && i < d; ++i)
            ok = R.col(i).norm() <= 1e-7 * (1.0 + Tq.col(i).norm());
        } else {
          ok = Tq.cwiseAbs().maxCoeff() <= 1e-9;
        }
        if (ok) cert.push_back(ci);
      }
      if (cert.empty()) continue;
      const int kc = static_cast<int>(cert.size());
      if (kc == d) {  // identically zero on the feasible set: vacuous
        nb.side = 0;
        ++zero_blocks;
        continue;
      }
      Eigen::MatrixXd Qc(d, kc);
      for (int i = 0; i < kc; ++i) Qc.col(i) = es.eigenvectors().col(cert[i]);
      Eigen::HouseholderQR<Eigen::MatrixXd> cqr(Qc);
      const Eigen::MatrixXd Qfull = cqr.householderQ();
      const Eigen::MatrixXd P = Qfull.rightCols(d - kc);
      // Rotate: collect per-variable matrices, conjugate, re-emit.
      std::map<int, Eigen::MatrixXd> per_var;
      for (const auto& t : nb.terms) {
        auto [it, fresh] = per_var.try_emplace(t.var, Eigen::MatrixXd::Zero(d, d));
        it->second(t.r, t.c) += t.coef;
        if (t.r != t.c) it->second(t.c, t.r) += t.coef;
      }
      const int dr = d - kc;
      std::vector<BlockTerm> nt, nc;
      for (const auto& [var, Afull] : per_var) {
        const Eigen::MatrixXd At = P.transpose() * Afull * P;
        const double amax = At.cwiseAbs().maxCoeff();
        if (amax <= 0.0) continue;
        for (int r = 0; r < dr; ++r)
          for (int c = r; c < dr; ++c)
            if (std::abs(At(r, c)) > 1e-14 * amax) nt.push_back({r, c, var, At(r, c)});
      }
      const Eigen::MatrixXd Ct = P.transpose() * nb.constant_matrix() * P;
      const double cmax = Ct.cwiseAbs().maxCoeff();
      for (int r = 0; r < dr; ++r)
        for (int c = r; c < dr; ++c)
          if (cmax > 0.0 && std::abs(Ct(r, c)) > 1e-14 * cmax) nc.push_back({r, c, -1, Ct(r, c)});
      nb.side = dr;
      nb.terms = std::move(nt);
      nb.constant = std::move(nc);
      pr.block_rotation[jb] = P;
      ++rotated_blocks;
      rotated_dirs += kc;
    }
    // Compact blocks emptied above (vacuous on the feasible set).
    if (zero_blocks > 0) {
      std::size_t w = 0;
      for (std::size_t jb = 0; jb < pr.reduced.blocks.size(); ++jb) {
        if (pr.reduced.blocks[jb].side == 0) continue;
        if (w != jb) {
          pr.reduced.blocks[w] = std::move(pr.reduced.blocks[jb]);
          pr.kept_block_to_orig[w] = pr.kept_block_to_orig[jb];
          pr.block_positions[w] = std::move(pr.block_positions[jb]);
          pr.block_rotation[w] = std::move(pr.block_rotation[jb]);
        }
        ++w;
      }
      pr.reduced.blocks.resize(w);
      pr.kept_block_to_orig.resize(w);
      pr.block_positions.resize(w);
      pr.block_rotation.resize(w);
    }
    // Rotation can orphan a variable entirely (all its block entries lay in
    // the removed subspace). An orphan with a cost is an unbounded direction;
    // a costless one is pinned at the current value to keep the Newton
    // system nonsingular.
    std::vector<bool> touched(nred, false);
    for (const auto& blk : pr.reduced.blocks)
      for (const auto& t : blk.terms) touched[t.var] = true;
    for (int i = 0; i < static_cast<int>(kept_live.size()); ++i)
      for (int v = 0; v < nred; ++v)
        if (Ak(i, v) != 0.0) touched[v] = true;
    std::vector<int> pins;
    for (int v = 0; v < nred; ++v) {
      if (touched[v]) continue;
      if (p.c[pr.free_to_orig[v]] != 0.0) {
        pr.unbounded = true;
        pr.message = "variable " + std::to_string(pr.free_to_orig[v]) +
                     " is unconstrained with a nonzero cost after facial reduction";
        return pr;
      }
      pins.push_back(v);
    }
    if (!pins.empty()) {
      const int m0 = static_cast<int>(Ak.rows());
      Ak.conservativeResize(m0 + pins.size(), nred);
      bk.conservativeResize(m0 + pins.size());
      for (std::size_t i = 0; i < pins.size(); ++i) {
        Ak.row(m0 + i).setZero();
        Ak(m0 + i, pins[i]) = 1.0;
        bk[m0 + i] = pr.y0[pins[i]];
        LinRow lr;
        lr.entries.emplace_back(pr.free_to_orig[pins[i]], 1.0);
        lr.rhs = pr.y0[pins[i]];
        lr.label = "pinned orphan variable";
        lr.dead = true;
        pr.kept_rows.push_back(static_cast<int>(rows.size()));
        rows.push_back(std::move(lr));
      }
    }
  }

  pr.reduced.nvar = nred;
  pr.reduced.A = Ak.sparseView();
  pr.reduced.b = bk;
  pr.reduced.c = Eigen::VectorXd::Zero(nred);
  for (int v = 0; v < nred; ++v) pr.reduced.c[v] = p.c[pr.free_to_orig[v]];
  for (const int id : pr.kept_rows) pr.reduced.row_labels.push_back(rows[id].label);

  std::ostringstream msg;
  msg << "presolve: " << pairs << " opposite block pair(s), " << fixed_count
      << " variable(s) fixed, " << dropped_positions << " dead block row(s), "
      << (mlive - mkept) << " dependent equality row(s) dropped, " << rotated_blocks
      << " block(s) rotated onto their face (" << rotated_dirs << " direction(s), "
      << zero_blocks << " vacuous); " << Ak.rows() << " row(s), " << nred
      << " variable(s), " << pr.reduced.blocks.size() << " block(s) remain";
  pr.message = msg.str();
  return pr;
}

// ---------------------------------------------------------------------------
// Interior-point core

namespace sdp_detail {

// Variable grouping: two variables share a group when some PSD block touches
// both; the Newton Hessian is block-diagonal across groups.
struct Groups {
  std::vector<int> group_of;   // var -> group
  std::vector<int> local_of;   // var -> index inside group
  std::vector<std::vector<int>> members;
};

inline Groups make_groups(const ConicProgram& p) {
  std::vector<int> parent(p.nvar);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (const auto& blk : p.blocks) {
    int first = -1;
    for (const auto& t : blk.terms) {
      if (first < 0) first = find(t.var);
      const int rv = find(t.var);
      if (rv != first) parent[rv] = first;
    }
  }
  Groups g;
  g.group_of.assign(p.nvar, -1);
  g.local_of.assign(p.nvar, -1);
  std::map<int, int> root_to_group;
  for (int v = 0; v < p.nvar; ++v) {
    const int r = find(v);
    auto [it, fresh] = root_to_group.try_emplace(r, static_cast<int>(g.members.size()));
    if (fresh) g.members.emplace_back();
    g.group_of[v] = it->second;
    g.local_of[v] = static_cast<int>(g.members[it->second].size());
    g.members[it->second].push_back(v);
  }
  return g;
}

// Per-block expanded data: full symmetric entry list (off-diagonal entries
// appear twice) for the Hessian assembly and adjoint/map applications.
struct BlockData {
  int side = 0;
  int group = -1;
  Eigen::MatrixXd C;
  std::vector<int> er, ec, ev;  // full entry list
  std::vector<double> ek;
  std::vector<BlockTerm> upper;  // original (r <= c) list
  // Hessian assembly route. Sparse blocks use the entry-pair loop (cost
  // nnz^2); dense blocks (facially reduced ones) instead conjugate each
  // variable's matrix once and take Frobenius products (cost v d^3 + v^2 d^2).
  bool dense_hessian = false;
  std::vector<int> var_ids;                      // distinct vars, ascending
  std::vector<std::pair<int, int>> var_ranges;   // [start, end) into by_var
  std::vector<BlockTerm> by_var;                 // upper list sorted by var
};

inline void apply_map(const BlockData& bd, const Eigen::VectorXd& y, Eigen::MatrixXd& out) {
  out.setZero(bd.side, bd.side);
  for (std::size_t i = 0; i < bd.er.size(); ++i)
    out(bd.er[i], bd.ec[i]) += bd.ek[i] * y[bd.ev[i]];
}

inline void apply_adjoint(const BlockData& bd, const Eigen::MatrixXd& Z, Eigen::VectorXd& out) {
  for (std::size_t i = 0; i < bd.er.size(); ++i)
    out[bd.ev[i]] += bd.ek[i] * Z(bd.er[i], bd.ec[i]);
}

// Largest step alpha with D + alpha * X (scaled slack) staying PSD, where the
// current scaled point is the diagonal D = diag(sigma).
inline double max_step(const Eigen::VectorXd& sigma, const Eigen::MatrixXd& Xs) {
  Eigen::VectorXd inv_sqrt = sigma.cwiseSqrt().cwiseInverse();
  Eigen::MatrixXd N = inv_sqrt.asDiagonal() * Xs * inv_sqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (N + N.transpose()),
                                                    Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin >= -1e-14) return std::numeric_limits<double>::infinity();
  return -1.0 / lmin;
}

}  // namespace sdp_detail

inline ConicSolution solve_presolved(const ConicProgram& p, const SolveOptions& opts,
                                     Eigen::VectorXd y_start = Eigen::VectorXd()) {
  using sdp_detail::BlockData;
  ConicSolution sol;
  const int n = p.nvar;
  const int m = static_cast<int>(p.A.rows());

  auto cap_dual = [](ConicSolution& s) {
    s.d_k = std::min(s.d_k, s.p_k + 1e-9 * (1.0 + std::abs(s.p_k)));
  };

  if (y_start.size() != n) {
    y_start = Eigen::VectorXd::Zero(n);
    if (m > 0) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod{Eigen::MatrixXd(p.A)};
      y_start = cod.solve(p.b);
    }
  }

  // No PSD blocks: a linear program with only equalities. The least-norm
  // feasible point is optimal iff c lies in the row space of A.
  if (p.blocks.empty()) {
    sol.y = y_start;
    sol.p_k = p.c.dot(sol.y);
    sol.lambda = Eigen::VectorXd::Zero(m);
    if (m > 0) {
      Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod{
          Eigen::MatrixXd(p.A.transpose())};
      sol.lambda = cod.solve(p.c);
    }
    Eigen::VectorXd rd = p.c;
    if (m > 0) rd -= p.A.transpose() * sol.lambda;
    if (n > 0 && rd.cwiseAbs().maxCoeff() > 1e-9 * (1.0 + p.c.cwiseAbs().maxCoeff())) {
      sol.status = SolveStatus::Unbounded;
      sol.message = "objective decreases along the equality null space";
      sol.d_k = -std::numeric_limits<double>::infinity();
      return sol;
    }
    sol.status = SolveStatus::Optimal;
    sol.d_k = m > 0 ? p.b.dot(sol.lambda) : 0.0;
    sol.primal_res = m > 0 ? (p.A * sol.y - p.b).norm() / (1.0 + p.b.norm()) : 0.0;
    sol.dual_res = 0.0;
    sol.gap = std::abs(sol.p_k - sol.d_k);
    cap_dual(sol);
    return sol;
  }

  const auto groups = sdp_detail::make_groups(p);
  const int ngroups = static_cast<int>(groups.members.size());

  std::vector<BlockData> blocks;
  double sum_dim = 0.0;
  for (const auto& spec : p.blocks) {
    BlockData bd;
    bd.side = spec.side;
    bd.C = spec.constant_matrix();
    bd.upper = spec.terms;
    bd.group = spec.terms.empty() ? -1 : groups.group_of[spec.terms[0].var];
    for (const auto& t : spec.terms) {
      bd.er.push_back(t.r);
      bd.ec.push_back(t.c);
      bd.ev.push_back(t.var);
      bd.ek.push_back(t.coef);
      if (t.r != t.c) {
        bd.er.push_back(t.c);
        bd.ec.push_back(t.r);
        bd.ev.push_back(t.var);
        bd.ek.push_back(t.coef);
      }
    }
    bd.by_var = spec.terms;
    std::stable_sort(bd.by_var.begin(), bd.by_var.end(),
                     [](const BlockTerm& a, const BlockTerm& b) { return a.var < b.var; });
    for (std::size_t i = 0; i < bd.by_var.size();) {
      std::size_t j2 = i;
      while (j2 < bd.by_var.size() && bd.by_var[j2].var == bd.by_var[i].var) ++j2;
      bd.var_ids.push_back(bd.by_var[i].var);
      bd.var_ranges.emplace_back(static_cast<int>(i), static_cast<int>(j2));
      i = j2;
    }
    const double d3 = static_cast<double>(spec.side) * spec.side * spec.side;
    const double pair_cost =
        static_cast<double>(bd.er.size()) * static_cast<double>(bd.er.size());
    const double nvb = static_cast<double>(bd.var_ids.size());
    const double gram_cost = nvb * 2.0 * d3 +
                             0.5 * nvb * nvb * static_cast<double>(spec.side) * spec.side;
    bd.dense_hessian = gram_cost < pair_cost;
    sum_dim += spec.side;
    blocks.push_back(std::move(bd));
  }
  const int nb = static_cast<int>(blocks.size());

  // Structural null space of the Hessian, per variable group. A direction v
  // is null for one Nesterov-Todd scaling exactly when it is null for all of
  // them: the scaled Hessian is sum_j |L_j(sum_a v_a A_a^(j))|^2 with L_j an
  // invertible congruence, so v is null iff sum_a v_a A_a^(j) vanishes in
  // every block j of the group. Facial rotation routinely manufactures such
  // directions — a block restricted to its face stops seeing combinations of
  // variables that still appear in equality rows — and inverting a ridged
  // singular Hessian turns the Newton directions into noise along them. They
  // are handled exactly instead: the Hessian is factored on its support Q
  // and the null directions ride through the Newton solve as free unknowns
  // pinned by the equality rows (a bordered Schur complement, below).
  struct GroupSpace {
    Eigen::MatrixXd Q;  // orthonormal basis of the supported directions
    Eigen::MatrixXd N;  // orthonormal basis of the structural null space
    int k = 0;          // null dimension; 0 selects the unprojected fast path
  };
  std::vector<GroupSpace> gspace(ngroups);
  std::vector<int> border_off(ngroups, 0);
  int k_total = 0;
  {
    struct Entry {
      int row, col;
      double coef;
    };
    std::vector<std::vector<Entry>> entries(ngroups);
    std::vector<int> trows(ngroups, 0);
    for (const auto& bd : blocks) {
      if (bd.group < 0) continue;
      std::map<std::pair<int, int>, int> row_of;
      auto& eg = entries[bd.group];
      int& nr = trows[bd.group];
      for (const auto& t : bd.upper) {
        const std::pair<int, int> key{std::min(t.r, t.c), std::max(t.r, t.c)};
        const auto [it, fresh] = row_of.try_emplace(key, nr);
        if (fresh) ++nr;
        eg.push_back({it->second, groups.local_of[t.var], t.coef});
      }
    }
    for (int gidx = 0; gidx < ngroups; ++gidx) {
      const int ngv = static_cast<int>(groups.members[gidx].size());
      auto& gs = gspace[gidx];
      if (trows[gidx] == 0) {
        gs.k = ngv;
        gs.N = Eigen::MatrixXd::Identity(ngv, ngv);
        gs.Q.resize(ngv, 0);
      } else {
        Eigen::MatrixXd T = Eigen::MatrixXd::Zero(trows[gidx], ngv);
        for (const auto& e : entries[gidx]) T(e.row, e.col) += e.coef;
        Eigen::BDCSVD<Eigen::MatrixXd> svd(T, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        const double tol = 1e-10 * (sv.size() > 0 ? sv[0] : 0.0);
        int rank = 0;
        while (rank < sv.size() && sv[rank] > tol) ++rank;
        gs.k = ngv - rank;
        if (gs.k > 0) {
          gs.Q = svd.matrixV().leftCols(rank);
          gs.N = svd.matrixV().rightCols(gs.k);
        }
      }
      border_off[gidx] = k_total;
      k_total += gs.k;
    }
    if (k_total > 0 && sdp_detail::debug_enabled())
      std::fprintf(stderr, "[setup] %d structural null direction(s) across %d group(s)\n",
                   k_total, ngroups);
  }

  // Iterates.
  Eigen::VectorXd y = y_start;
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(m);
  std::vector<Eigen::MatrixXd> S(nb), Z(nb);
  for (int j = 0; j < nb; ++j) {
    S[j] = (1.0 + blocks[j].C.norm()) * Eigen::MatrixXd::Identity(blocks[j].side, blocks[j].side);
    Z[j] = Eigen::MatrixXd::Identity(blocks[j].side, blocks[j].side);
  }

  const double bnorm = 1.0 + (m > 0 ? p.b.norm() : 0.0);
  const double cnorm = 1.0 + p.c.norm();

  // A A' factored once: used to project the primal iterate back onto
  // {A y = b} after every step and to re-pick lambda as the least-squares
  // minimizer of the dual residual. Both keep the endgame stable when the
  // Schur system turns ill-conditioned near a degenerate optimum.
  Eigen::LLT<Eigen::MatrixXd> aat_llt;
  bool polish = false;
  if (m > 0) {
    const Eigen::MatrixXd AAt =
        Eigen::MatrixXd(p.A * Eigen::SparseMatrix<double, Eigen::RowMajor>(p.A.transpose()));
    aat_llt.compute(AAt);
    polish = aat_llt.info() == Eigen::Success;
  }
  auto project_primal = [&](Eigen::VectorXd& v) {
    if (polish) v += p.A.transpose() * aat_llt.solve(p.b - p.A * v);
  };
  auto polish_dual = [&](Eigen::VectorXd& lam, const std::vector<Eigen::MatrixXd>& Zc) {
    if (!polish) return;
    Eigen::VectorXd target = p.c;
    for (int j = 0; j < nb; ++j) {
      Eigen::VectorXd adj = Eigen::VectorXd::Zero(n);
      sdp_detail::apply_adjoint(blocks[j], Zc[j], adj);
      target -= adj;
    }
    lam = aat_llt.solve(p.A * target);
  };

  // Workspaces reused across iterations. The Newton systems are assembled in
  // double but factored and back-substituted in long double: near a
  // degenerate optimum their conditioning exceeds 1e16 and the extended
  // mantissa is what keeps the final digits of the search direction.
  using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorXld = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
  std::vector<Eigen::MatrixXd> G(nb), Gi(nb), Winv(nb), rs(nb), q(nb), dS(nb), dZ(nb), dSs(nb),
      dZs(nb), Es(nb);
  std::vector<Eigen::VectorXd> sigma(nb);
  std::vector<Eigen::MatrixXd> Mg(ngroups);
  std::vector<Eigen::LLT<MatrixXld>> Mllt(ngroups);
  std::vector<Eigen::MatrixXd> Xg(ngroups);  // M^+ A' per group (lifted through Q)
  Eigen::MatrixXd B;                         // Schur complement on lambda
  Eigen::LLT<MatrixXld> Bllt_ld;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> Bcod;  // fallback
  Eigen::MatrixXd Ub;                // border: equality columns of the null directions
  Eigen::FullPivLU<MatrixXld> Kflu;  // bordered Schur factor (k_total > 0)
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> Kcod;  // fallback
  bool b_ok = true, k_ok = true;

  struct Best {
    double merit = std::numeric_limits<double>::infinity();
    Eigen::VectorXd y, lambda;
    std::vector<Eigen::MatrixXd> Z;
    double p = 0, d = 0, gap = 0, rp = 0, rd = 0;
    int iter = 0;
  } best;

  std::string stop_reason;
  int slow_steps = 0;

  auto apply_m = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(n);
    for (int gidx = 0; gidx < ngroups; ++gidx) {
      const auto& mem = groups.members[gidx];
      Eigen::VectorXd sub(mem.size());
      for (std::size_t i = 0; i < mem.size(); ++i) sub[i] = v[mem[i]];
      Eigen::VectorXd prod = Mg[gidx] * sub;
      for (std::size_t i = 0; i < mem.size(); ++i) out[mem[i]] = prod[i];
    }
    return out;
  };
  // M^+ v groupwise: plain inverse on nonsingular groups, inverse on the
  // support Q elsewhere (null components of the result are supplied by the
  // bordered solve, not here).
  auto solve_m = [&](const Eigen::VectorXd& v) {
    Eigen::VectorXd out(n);
    for (int gidx = 0; gidx < ngroups; ++gidx) {
      const auto& mem = groups.members[gidx];
      Eigen::VectorXd sub(mem.size());
      for (std::size_t i = 0; i < mem.size(); ++i) sub[i] = v[mem[i]];
      Eigen::VectorXd sol_g;
      if (gspace[gidx].k == 0) {
        sol_g = Mllt[gidx].solve(sub.cast<long double>()).cast<double>();
      } else {
        const auto& gs = gspace[gidx];
        const VectorXld zs = Mllt[gidx].solve((gs.Q.transpose() * sub).cast<long double>());
        sol_g = gs.Q * zs.cast<double>();
      }
      for (std::size_t i = 0; i < mem.size(); ++i) out[mem[i]] = sol_g[i];
    }
    return out;
  };

  // Solves M dy - A' dl = g, A dy = rp through the Schur complement, with
  // iterative refinement: near the central-path endgame M is extremely
  // ill-conditioned and a single factored solve loses the dual equation.
  // Null directions of M enter as extra unknowns dw through the bordered
  // system [B, A N; (A N)', 0]: dy += N dw keeps the equality rows exact and
  // N' (g + A' dl) = 0 keeps the dual equation exact along the null space.
  auto solve_with = [&](const Eigen::VectorXd& g_vec, const Eigen::VectorXd& rp,
                        Eigen::VectorXd& dy, Eigen::VectorXd& dl) {
    dy = Eigen::VectorXd::Zero(n);
    dl = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd e1 = g_vec;
    Eigen::VectorXd e2 = rp;
    const double ref_scale = 1.0 + g_vec.norm() + rp.norm();
    Eigen::VectorXd best_dy = dy, best_dl = dl;
    double best_res = std::numeric_limits<double>::infinity();
    for (int pass = 0; pass < 8; ++pass) {
      Eigen::VectorXd mi = solve_m(e1);
      if (m > 0 && k_total > 0) {
        Eigen::VectorXd rhs(m + k_total);
        rhs.head(m) = e2 - p.A * mi;
        for (int gidx = 0; gidx < ngroups; ++gidx) {
          const auto& gs = gspace[gidx];
          if (gs.k == 0) continue;
          const auto& mem = groups.members[gidx];
          Eigen::VectorXd sub(mem.size());
          for (std::size_t i = 0; i < mem.size(); ++i) sub[i] = e1[mem[i]];
          rhs.segment(m + border_off[gidx], gs.k) = -gs.N.transpose() * sub;
        }
        const Eigen::VectorXd sol_k =
            k_ok ? Eigen::VectorXd(Kflu.solve(rhs.cast<long double>()).cast<double>())
                 : Kcod.solve(rhs);
        const Eigen::VectorXd dlc = sol_k.head(m);
        dy += solve_m(e1 + p.A.transpose() * dlc);
        for (int gidx = 0; gidx < ngroups; ++gidx) {
          const auto& gs = gspace[gidx];
          if (gs.k == 0) continue;
          const auto& mem = groups.members[gidx];
          const Eigen::VectorXd dwg = gs.N * sol_k.segment(m + border_off[gidx], gs.k);
          for (std::size_t i = 0; i < mem.size(); ++i) dy[mem[i]] += dwg[i];
        }
        dl += dlc;
      } else if (m > 0) {
        Eigen::VectorXd rhs = e2 - p.A * mi;
        Eigen::VectorXd dlc;
        if (b_ok)
          dlc = Bllt_ld.solve(rhs.cast<long double>()).cast<double>();
        else
          dlc = Bcod.solve(rhs);
        dy += solve_m(e1 + p.A.transpose() * dlc);
        dl += dlc;
      } else {
        dy += mi;
      }
      e1 = g_vec - apply_m(dy);
      if (m > 0) {
        e1 += p.A.transpose() * dl;
        e2 = rp - p.A * dy;
      }
      const double res = e1.norm() + e2.norm();
      if (res >= 4.0 * best_res) break;  // refinement is diverging
      if (res < best_res) {
        best_res = res;
        best_dy = dy;
        best_dl = dl;
      }
      if (res <= 1e-13 * ref_scale) break;
    }
    dy = best_dy;
    dl = best_dl;
    if (sdp_detail::debug_enabled())
      std::fprintf(stderr, "         newton: res=%.3e scale=%.3e eq_res=%.3e\n", best_res,
                   ref_scale, m > 0 ? (rp - p.A * dy).norm() : 0.0);
  };

  project_primal(y);
  polish_dual(lambda, Z);

  // Residual bundle for an iterate; also fills the slack residual matrices
  // when a workspace is supplied (the Newton right-hand sides need them).
  struct Metrics {
    Eigen::VectorXd rp, rd;
    double gap_c = 0, mu = 0, p_obj = 0, d_obj = 0;
    double rp_rel = 0, rd_rel = 0, rs_rel = 0, gap_rel = 0, merit = 0;
  };
  auto eval_metrics = [&](const Eigen::VectorXd& yv, const Eigen::VectorXd& lv,
                          const std::vector<Eigen::MatrixXd>& Sv,
                          const std::vector<Eigen::MatrixXd>& Zv,
                          std::vector<Eigen::MatrixXd>* rs_out) {
    Metrics mt;
    mt.rp = m > 0 ? Eigen::VectorXd(p.b - p.A * yv) : Eigen::VectorXd(0);
    mt.rd = p.c;
    if (m > 0) mt.rd -= p.A.transpose() * lv;
    Eigen::VectorXd adj = Eigen::VectorXd::Zero(n);
    for (int j = 0; j < nb; ++j) sdp_detail::apply_adjoint(blocks[j], Zv[j], adj);
    mt.rd -= adj;
    Eigen::MatrixXd rs_tmp;
    for (int j = 0; j < nb; ++j) {
      Eigen::MatrixXd& rsj = rs_out ? (*rs_out)[j] : rs_tmp;
      sdp_detail::apply_map(blocks[j], yv, rsj);
      rsj += blocks[j].C - Sv[j];
      mt.gap_c += Sv[j].cwiseProduct(Zv[j]).sum();
      mt.rs_rel = std::max(mt.rs_rel, rsj.norm() / (1.0 + Sv[j].norm()));
    }
    mt.mu = mt.gap_c / sum_dim;
    mt.p_obj = p.c.dot(yv);
    mt.d_obj = m > 0 ? p.b.dot(lv) : 0.0;
    for (int j = 0; j < nb; ++j) mt.d_obj -= blocks[j].C.cwiseProduct(Zv[j]).sum();
    mt.rp_rel = m > 0 ? mt.rp.norm() / bnorm : 0.0;
    mt.rd_rel = mt.rd.norm() / cnorm;
    mt.gap_rel = mt.gap_c / (1.0 + std::abs(mt.p_obj) + std::abs(mt.d_obj));
    mt.merit = std::max({mt.rp_rel, mt.rd_rel, mt.rs_rel, mt.gap_rel});
    return mt;
  };

  int iter = 0;
  for (; iter < opts.max_iter; ++iter) {
    const Metrics mt = eval_metrics(y, lambda, S, Z, &rs);
    const Eigen::VectorXd& rp = mt.rp;
    const Eigen::VectorXd& rd = mt.rd;
    const double gap_c = mt.gap_c, mu = mt.mu, p_obj = mt.p_obj, d_obj = mt.d_obj;
    const double rp_rel = mt.rp_rel, rd_rel = mt.rd_rel, rs_rel = mt.rs_rel,
                 gap_rel = mt.gap_rel;
    const double scale = 1.0 + std::abs(p_obj) + std::abs(d_obj);
    const double merit = mt.merit;
    if (merit < best.merit) {
      best = {merit, y, lambda, Z, p_obj, d_obj, gap_c, std::max(rp_rel, rs_rel), rd_rel, iter};
    }
    if (opts.trace)
      opts.trace({iter, p_obj, d_obj, gap_rel, std::max(rp_rel, rs_rel), rd_rel, 0.0});
    sol.log.push_back({iter, p_obj, d_obj, gap_rel, std::max(rp_rel, rs_rel), rd_rel, 0.0});
    if (sdp_detail::debug_enabled())
      std::fprintf(stderr,
                   "[it %3d] mu=%9.3e rp=%8.2e rd=%8.2e rs=%8.2e gap=%8.2e p=%+.9e d=%+.9e\n",
                   iter, mu, rp_rel, rd_rel, rs_rel, gap_rel, p_obj, d_obj);

    if (rp_rel <= opts.tol_feas && rd_rel <= opts.tol_feas && rs_rel <= opts.tol_feas &&
        gap_rel <= opts.tol_gap) {
      sol.status = SolveStatus::Optimal;
      stop_reason = "converged";
      break;
    }
    if (p_obj < -1e12 * scale || !std::isfinite(p_obj)) {
      stop_reason = "primal objective diverged";
      break;
    }

    // Nesterov-Todd scaling per block.
    bool factor_ok = true;
    for (int j = 0; j < nb; ++j) {
      Eigen::LLT<Eigen::MatrixXd> ls(S[j]), lz(Z[j]);
      if (ls.info() != Eigen::Success || lz.info() != Eigen::Success) {
        factor_ok = false;
        break;
      }
      Eigen::MatrixXd Ls = ls.matrixL(), Lz = lz.matrixL();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(Lz.transpose() * Ls,
                                            Eigen::ComputeFullU | Eigen::ComputeFullV);
      sigma[j] = svd.singularValues();
      Eigen::VectorXd si = sigma[j].cwiseSqrt().cwiseInverse();
      G[j] = Ls * svd.matrixV() * si.asDiagonal();
      Gi[j] = si.asDiagonal() * svd.matrixU().transpose() * Lz.transpose();
      Winv[j] = Gi[j].transpose() * Gi[j];
    }
    if (!factor_ok) {
      stop_reason = "iterate left the cone";
      break;
    }
    if (sdp_detail::debug_enabled()) {
      double smin = std::numeric_limits<double>::infinity(), smax = 0.0;
      for (int j = 0; j < nb; ++j) {
        smin = std::min(smin, sigma[j].minCoeff());
        smax = std::max(smax, sigma[j].maxCoeff());
      }
      std::fprintf(stderr, "         nt sigma: [%9.3e, %9.3e] spread %.2e\n", smin, smax,
                   smax / std::max(smin, 1e-300));
    }

    // Hessian per group and its Cholesky.
    for (int gidx = 0; gidx < ngroups; ++gidx)
      Mg[gidx].setZero(groups.members[gidx].size(), groups.members[gidx].size());
    for (int j = 0; j < nb; ++j) {
      const auto& bd = blocks[j];
      if (bd.group < 0) continue;
      auto& M = Mg[bd.group];
      if (bd.dense_hessian) {
        // <A_l1, Winv A_l2 Winv> = <D_l1, D_l2> with D_l = Gi A_l Gi'.
        const int nv = static_cast<int>(bd.var_ids.size());
        std::vector<Eigen::MatrixXd> D(nv);
        Eigen::MatrixXd Af(bd.side, bd.side);
        for (int a = 0; a < nv; ++a) {
          Af.setZero();
          for (int t = bd.var_ranges[a].first; t < bd.var_ranges[a].second; ++t) {
            const auto& bt = bd.by_var[t];
            Af(bt.r, bt.c) += bt.coef;
            if (bt.r != bt.c) Af(bt.c, bt.r) += bt.coef;
          }
          D[a] = Gi[j] * Af * Gi[j].transpose();
        }
        for (int a = 0; a < nv; ++a) {
          const int la = groups.local_of[bd.var_ids[a]];
          for (int b2 = 0; b2 <= a; ++b2) {
            const int lb = groups.local_of[bd.var_ids[b2]];
            const double val = D[a].cwiseProduct(D[b2]).sum();
            M(la, lb) += val;
            if (la != lb) M(lb, la) += val;
          }
        }
        continue;
      }
      const auto& Wi = Winv[j];
      const std::size_t ne = bd.er.size();
      for (std::size_t a = 0; a < ne; ++a) {
        const int ra = bd.er[a], ca = bd.ec[a], la = groups.local_of[bd.ev[a]];
        const double ka = bd.ek[a];
        for (std::size_t bidx = 0; bidx < ne; ++bidx)
          M(la, groups.local_of[bd.ev[bidx]]) +=
              ka * bd.ek[bidx] * Wi(ra, bd.er[bidx]) * Wi(bd.ec[bidx], ca);
      }
    }
    for (int gidx = 0; gidx < ngroups; ++gidx) {
      const auto& gs = gspace[gidx];
      Eigen::MatrixXd Mproj;
      if (gs.k > 0) Mproj = gs.Q.transpose() * Mg[gidx] * gs.Q;
      const Eigen::MatrixXd& Mh = gs.k > 0 ? Mproj : Mg[gidx];
      long double ridge = 0.0L;
      for (int attempt = 0;; ++attempt) {
        MatrixXld Mt = Mh.cast<long double>();
        if (ridge > 0.0L)
          Mt.diagonal().array() += ridge * (1.0L + Mt.diagonal().maxCoeff());
        Mllt[gidx].compute(Mt);
        if (Mllt[gidx].info() == Eigen::Success) break;
        if (attempt == 3) {
          factor_ok = false;
          break;
        }
        ridge = ridge == 0.0L ? 1e-16L : ridge * 100.0L;
      }
      if (ridge > 0.0L && sdp_detail::debug_enabled())
        std::fprintf(stderr, "         hessian group %d: ridge %.1Le\n", gidx, ridge);
      if (!factor_ok) break;
    }
    if (!factor_ok) {
      stop_reason = "Hessian factorization failed";
      break;
    }

    // Schur complement on the equality multipliers. Structural null
    // directions border it with their equality columns A N; the saddle
    // factorization pins them where a plain Cholesky of B could not.
    b_ok = true;
    k_ok = true;
    if (m > 0) {
      if (k_total > 0) Ub.setZero(m, k_total);
      for (int gidx = 0; gidx < ngroups; ++gidx) {
        const auto& mem = groups.members[gidx];
        const auto& gs = gspace[gidx];
        Eigen::MatrixXd At = Eigen::MatrixXd::Zero(mem.size(), m);
        for (int r = 0; r < m; ++r)
          for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(p.A, r); it; ++it)
            if (groups.group_of[it.col()] == gidx) At(groups.local_of[it.col()], r) = it.value();
        if (gs.k == 0) {
          Xg[gidx] = Mllt[gidx].solve(At.cast<long double>()).cast<double>();
        } else {
          const MatrixXld Pz = (gs.Q.transpose() * At).cast<long double>();
          Xg[gidx] = gs.Q * Mllt[gidx].solve(Pz).cast<double>();
          Ub.middleCols(border_off[gidx], gs.k) = At.transpose() * gs.N;
        }
      }
      B.setZero(m, m);
      for (int r = 0; r < m; ++r)
        for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(p.A, r); it; ++it)
          B.row(r) += it.value() * Xg[groups.group_of[it.col()]].row(groups.local_of[it.col()]);
      if (k_total == 0) {
        Bllt_ld.compute((0.5 * (B + B.transpose())).cast<long double>());
        if (Bllt_ld.info() != Eigen::Success) {
          b_ok = false;
          Bcod.compute(0.5 * (B + B.transpose()));
        }
      } else {
        Eigen::MatrixXd K(m + k_total, m + k_total);
        K.topLeftCorner(m, m) = 0.5 * (B + B.transpose());
        K.topRightCorner(m, k_total) = Ub;
        K.bottomLeftCorner(k_total, m) = Ub.transpose();
        K.bottomRightCorner(k_total, k_total).setZero();
        Kflu.compute(K.cast<long double>());
        k_ok = Kflu.isInvertible();
        if (!k_ok) Kcod.compute(K);
      }
    }

    // Predictor (affine scaling) direction: q_j = -Z_j.
    Eigen::VectorXd g_aff = -rd;
    for (int j = 0; j < nb; ++j) {
      Eigen::MatrixXd Q = -Z[j] - Winv[j] * rs[j] * Winv[j];
      Eigen::VectorXd tmp = Eigen::VectorXd::Zero(n);
      sdp_detail::apply_adjoint(blocks[j], Q, tmp);
      g_aff += tmp;
    }
    // (g = sum adj(q - Winv rs Winv) - rd; signs: see the derivation above.)
    Eigen::VectorXd dy, dl;
    solve_with(g_aff, rp, dy, dl);
    double ap_aff = 1.0, ad_aff = 1.0;
    for (int j = 0; j < nb; ++j) {
      sdp_detail::apply_map(blocks[j], dy, dS[j]);
      dS[j] += rs[j];
      dZ[j] = -Z[j] - Winv[j] * dS[j] * Winv[j];
      dZ[j] = 0.5 * (dZ[j] + dZ[j].transpose()).eval();
      dSs[j] = Gi[j] * dS[j] * Gi[j].transpose();
      dZs[j] = G[j].transpose() * dZ[j] * G[j];
      ap_aff = std::min(ap_aff, sdp_detail::max_step(sigma[j], dSs[j]));
      ad_aff = std::min(ad_aff, sdp_detail::max_step(sigma[j], dZs[j]));
    }
    double mu_aff = 0.0;
    for (int j = 0; j < nb; ++j)
      mu_aff += (S[j] + ap_aff * dS[j]).cwiseProduct(Z[j] + ad_aff * dZ[j]).sum();
    mu_aff = std::max(mu_aff / sum_dim, 0.0);
    const double sigma_c = std::clamp(std::pow(mu_aff / std::max(mu, 1e-300), 3.0), 0.0, 1.0);

    // Corrector: combined direction with centering sigma_c * mu.
    Eigen::VectorXd g_comb = -rd;
    for (int j = 0; j < nb; ++j) {
      const auto& sg = sigma[j];
      Eigen::MatrixXd H = 0.5 * (dSs[j] * dZs[j] + dZs[j] * dSs[j].transpose());
      H = 0.5 * (H + H.transpose()).eval();
      Es[j].resize(blocks[j].side, blocks[j].side);
      for (int r = 0; r < blocks[j].side; ++r)
        for (int c = 0; c < blocks[j].side; ++c) {
          const double denom = sg[r] + sg[c];
          Es[j](r, c) = (2.0 * (sigma_c * mu * (r == c ? 1.0 : 0.0) - H(r, c))) / denom -
                        (r == c ? sg[r] : 0.0);
        }
      q[j] = Gi[j].transpose() * Es[j] * Gi[j];
      Eigen::MatrixXd Q = q[j] - Winv[j] * rs[j] * Winv[j];
      Eigen::VectorXd tmp = Eigen::VectorXd::Zero(n);
      sdp_detail::apply_adjoint(blocks[j], Q, tmp);
      g_comb += tmp;
    }
    solve_with(g_comb, rp, dy, dl);
    double ap = 1.0, ad = 1.0;
    for (int j = 0; j < nb; ++j) {
      sdp_detail::apply_map(blocks[j], dy, dS[j]);
      dS[j] += rs[j];
      dZ[j] = q[j] - Winv[j] * dS[j] * Winv[j];
      dZ[j] = 0.5 * (dZ[j] + dZ[j].transpose()).eval();
      ap = std::min(ap, 0.98 * sdp_detail::max_step(sigma[j], Gi[j] * dS[j] * Gi[j].transpose()));
      ad = std::min(ad, 0.98 * sdp_detail::max_step(sigma[j], G[j].transpose() * dZ[j] * G[j]));
    }
    ap = std::min(ap, 1.0);
    ad = std::min(ad, 1.0);

    // Accept the step only if the candidate factors as strictly positive
    // definite and does not wreck the merit. The cone line search happens in
    // the scaled basis, which is itself only accurate to O(kappa * eps): near
    // a degenerate optimum the 0.98 margin can overshoot the true boundary,
    // and an indefinite iterate would abort the next scaling step. Checking
    // with the very factorization that step applies makes acceptance imply
    // the iteration can continue. The merit guard handles the other failure
    // mode: a direction can stay inside the cone yet carry enormous
    // components that destroy the dual iterate. Back off and finally stop
    // rather than walk away from the best point found.
    Eigen::VectorXd y_new, lam_new;
    std::vector<Eigen::MatrixXd> S_new(nb), Z_new(nb);
    double back = 1.0;
    bool accepted = false;
    for (int attempt = 0; attempt < 6; ++attempt) {
      y_new = y + back * ap * dy;
      lam_new = lambda;
      if (m > 0) lam_new += back * ad * dl;
      bool in_cone = true;
      for (int j = 0; j < nb; ++j) {
        S_new[j] = S[j] + back * ap * dS[j];
        Z_new[j] = Z[j] + back * ad * dZ[j];
        S_new[j] = 0.5 * (S_new[j] + S_new[j].transpose()).eval();
        Z_new[j] = 0.5 * (Z_new[j] + Z_new[j].transpose()).eval();
        if (in_cone && (Eigen::LLT<Eigen::MatrixXd>(S_new[j]).info() != Eigen::Success ||
                        Eigen::LLT<Eigen::MatrixXd>(Z_new[j]).info() != Eigen::Success))
          in_cone = false;
      }
      if (in_cone) {
        project_primal(y_new);
        polish_dual(lam_new, Z_new);
        const Metrics mt_new = eval_metrics(y_new, lam_new, S_new, Z_new, nullptr);
        if (mt_new.merit <= 10.0 * merit || mt_new.merit <= best.merit) {
          accepted = true;
          break;
        }
        if (sdp_detail::debug_enabled())
          std::fprintf(stderr, "         reject back=%.2e: merit %.3e > %.3e\n", back,
                       mt_new.merit, 10.0 * merit);
      } else if (sdp_detail::debug_enabled()) {
        std::fprintf(stderr, "         reject back=%.2e: candidate left the cone\n", back);
      }
      back *= 0.25;
    }
    if (!accepted) {
      stop_reason = "no acceptable step direction";
      break;
    }
    y.swap(y_new);
    lambda.swap(lam_new);
    S.swap(S_new);
    Z.swap(Z_new);
    sol.log.back().step = back * std::min(ap, ad);
    if (sdp_detail::debug_enabled())
      std::fprintf(stderr, "         step: ap=%.3e ad=%.3e back=%.2e sigma_c=%.3e\n", ap, ad,
                   back, sigma_c);

    if (back * std::max(ap, ad) < 1e-7) {
      if (++slow_steps >= 3) {
        stop_reason = "step sizes collapsed";
        break;
      }
    } else {
      slow_steps = 0;
    }
  }

  if (sdp_detail::debug_enabled())
    std::fprintf(stderr, "[stop] %s after %d iterations\n",
                 stop_reason.empty() ? "iteration cap reached" : stop_reason.c_str(), iter);

  // Classify the returned (best) iterate.
  if (sol.status != SolveStatus::Optimal) {
    sol.y = best.y.size() ? best.y : y;
    sol.lambda = best.y.size() ? best.lambda : lambda;
    sol.Z = best.y.size() ? best.Z : Z;
    sol.p_k = best.y.size() ? best.p : p.c.dot(y);
    sol.d_k = best.y.size() ? best.d : 0.0;
    sol.gap = best.gap;
    sol.primal_res = best.rp;
    sol.dual_res = best.rd;
    sol.iterations = iter;
    const double near_feas = std::max(1e-5, 10.0 * opts.tol_feas);
    const double near_gap = std::max(1e-5, 10.0 * opts.tol_gap);
    const double gap_rel = best.gap / (1.0 + std::abs(best.p) + std::abs(best.d));
    if (best.rp <= near_feas && best.rd <= near_feas && gap_rel <= near_gap)
      sol.status = SolveStatus::NearOptimal;
    else
      sol.status = SolveStatus::Stalled;
    if (stop_reason.empty()) stop_reason = "iteration cap reached";
    sol.message = stop_reason + " (best iterate from iteration " + std::to_string(best.iter) + ")";
    cap_dual(sol);
    return sol;
  }

  sol.y = y;
  sol.lambda = lambda;
  sol.Z = Z;
  sol.p_k = p.c.dot(y);
  sol.d_k = m > 0 ? p.b.dot(lambda) : 0.0;
  for (int j = 0; j < nb; ++j) sol.d_k -= blocks[j].C.cwiseProduct(Z[j]).sum();
  sol.gap = sol.log.empty() ? 0.0 : sol.log.back().gap;
  sol.primal_res = sol.log.empty() ? 0.0 : sol.log.back().primal_res;
  sol.dual_res = sol.log.empty() ? 0.0 : sol.log.back().dual_res;
  sol.iterations = iter;
  sol.message = "converged";
  cap_dual(sol);
  return sol;
}

// Expands a solution of the presolved program back to the original one.
inline ConicSolution recover(const ConicProgram& original, const PresolveResult& pr,
                             const ConicSolution& red) {
  ConicSolution sol = red;
  sol.y = Eigen::VectorXd::Zero(pr.n_orig);
  for (int v = 0; v < pr.n_orig; ++v)
    if (!std::isnan(pr.fixed[v])) sol.y[v] = pr.fixed[v];
  for (std::size_t i = 0; i < pr.free_to_orig.size(); ++i) sol.y[pr.free_to_orig[i]] = red.y[i];
  sol.lambda = Eigen::VectorXd::Zero(pr.m_orig);
  for (std::size_t i = 0; i < pr.kept_rows.size(); ++i)
    if (pr.kept_rows[i] < pr.m_orig && i < static_cast<std::size_t>(red.lambda.size()))
      sol.lambda[pr.kept_rows[i]] = red.lambda[i];
  sol.Z.assign(original.blocks.size(), Eigen::MatrixXd());
  for (std::size_t jr = 0; jr < pr.kept_block_to_orig.size(); ++jr) {
    const int jo = pr.kept_block_to_orig[jr];
    Eigen::MatrixXd Zf = Eigen::MatrixXd::Zero(original.blocks[jo].side, original.blocks[jo].side);
    if (jr < red.Z.size() && red.Z[jr].size() > 0) {
      const auto& posv = pr.block_positions[jr];
      Eigen::MatrixXd Zk = red.Z[jr];
      if (jr < pr.block_rotation.size() && pr.block_rotation[jr].size() > 0) {
        const auto& P = pr.block_rotation[jr];
        Zk = P * Zk * P.transpose();
      }
      for (std::size_t a = 0; a < posv.size(); ++a)
        for (std::size_t b2 = 0; b2 < posv.size(); ++b2) Zf(posv[a], posv[b2]) = Zk(a, b2);
    }
    sol.Z[jo] = std::move(Zf);
  }
  sol.p_k = red.p_k + pr.objective_offset;
  sol.d_k = red.d_k + pr.objective_offset;
  sol.d_k = std::min(sol.d_k, sol.p_k + 1e-9 * (1.0 + std::abs(sol.p_k)));
  if (!pr.message.empty()) sol.message = pr.message + "; " + red.message;
  return sol;
}

inline ConicSolution solve(const ConicProgram& p, SolveOptions opts = {}) {
  if (!opts.use_presolve) return solve_presolved(p, opts);
  PresolveResult pr = presolve(p);
  if (pr.infeasible || pr.unbounded) {
    ConicSolution sol;
    sol.status = pr.infeasible ? SolveStatus::Infeasible : SolveStatus::Unbounded;
    sol.message = pr.message;
    sol.y = Eigen::VectorXd::Zero(p.nvar);
    sol.lambda = Eigen::VectorXd::Zero(p.A.rows());
    sol.p_k = std::numeric_limits<double>::quiet_NaN();
    sol.d_k = pr.infeasible ? std::numeric_limits<double>::infinity()
                            : -std::numeric_limits<double>::infinity();
    return sol;
  }
  ConicSolution sol = recover(p, pr, solve_presolved(pr.reduced, opts, pr.y0));
  if (sol.status != SolveStatus::Stalled) return sol;

  // Retry ladder for stalled runs. Dropping dependent equality rows and
  // rotating blocks onto their face are each sound and each helps most
  // assemblies, but on some programs the combination corners the dual
  // (the rotation removes slack directions the reduced row set can no
  // longer replace) and the iteration diverges. Retrying with less of the
  // presolve keeps the robust path deterministic: first without facial
  // rotation, then on the raw program; the best attempt is returned.
  const auto better = [](const ConicSolution& a, const ConicSolution& b) {
    const auto ok = [](const ConicSolution& s) {
      return s.status == SolveStatus::Optimal || s.status == SolveStatus::NearOptimal;
    };
    if (ok(a) != ok(b)) return ok(a);
    const auto score = [](const ConicSolution& s) {
      return std::max({s.primal_res, s.dual_res,
                       s.gap / (1.0 + std::abs(s.p_k) + std::abs(s.d_k))});
    };
    return score(a) <= score(b);
  };

  PresolveResult pr2 = presolve(p, /*facial_rotation=*/false);
  if (!pr2.infeasible && !pr2.unbounded) {
    ConicSolution s2 = recover(p, pr2, solve_presolved(pr2.reduced, opts, pr2.y0));
    s2.message += " [retry without facial reduction]";
    if (better(s2, sol)) sol = std::move(s2);
    if (sol.status != SolveStatus::Stalled) return sol;
  }
  ConicSolution s3 = solve_presolved(p, opts);
  s3.message += " [retry without presolve]";
  if (better(s3, sol)) sol = std::move(s3);
  return sol;
}

// Certified lower bound accessor: only meaningful on solved programs.
inline double extract_dual_bound(const ConicSolution& sol) {
  if (sol.status != SolveStatus::Optimal && sol.status != SolveStatus::NearOptimal)
    throw Error("extract_dual_bound: solution status is " + std::string(to_string(sol.status)));
  return sol.d_k;
}

}  // namespace hocp
