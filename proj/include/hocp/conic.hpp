#pragma once

// Conic program interchange types: linear objective and equalities over a
// real vector plus symmetric PSD constraints that are affine in the vector.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <string>
#include <vector>

#include "hocp/poly.hpp"

namespace hocp {

// One coefficient of a PSD block: S contributes coef * y[var] at (r, c) and
// mirrored at (c, r). Entries are stored with r <= c.
struct BlockTerm {
  int r, c, var;
  double coef;
};

struct ConicBlockSpec {
  int side = 0;
  std::string label;
  std::vector<BlockTerm> terms;
  std::vector<BlockTerm> constant;  // constant part C (var ignored, set to -1)

  // Dense realizations used by both the solver and feasibility checks.
  Eigen::MatrixXd constant_matrix() const {
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(side, side);
    for (const auto& t : constant) {
      C(t.r, t.c) += t.coef;
      if (t.r != t.c) C(t.c, t.r) += t.coef;
    }
    return C;
  }

  Eigen::MatrixXd value(const Eigen::VectorXd& y) const {
    Eigen::MatrixXd S = constant_matrix();
    for (const auto& t : terms) {
      S(t.r, t.c) += t.coef * y[t.var];
      if (t.r != t.c) S(t.c, t.r) += t.coef * y[t.var];
    }
    return S;
  }
};

// min c'y  s.t.  A y = b,  S_j(y) = C_j + sum_l y_l A_{jl}  PSD for all j.
struct ConicProgram {
  int nvar = 0;
  Eigen::SparseMatrix<double, Eigen::RowMajor> A;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::vector<ConicBlockSpec> blocks;
  std::vector<std::string> row_labels;
};

enum class SolveStatus { Optimal, NearOptimal, Infeasible, Unbounded, Stalled };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::NearOptimal: return "NearOptimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::Stalled: return "Stalled";
  }
  return "?";
}

struct IterationLog {
  int iter;
  double primal_obj, dual_obj, gap, primal_res, dual_res, step;
};

struct ConicSolution {
  SolveStatus status = SolveStatus::Stalled;
  Eigen::VectorXd y;        // primal vector (moment stacking in our use)
  Eigen::VectorXd lambda;   // multipliers of A y = b
  double p_k = 0.0;         // c'y at the returned point
  double d_k = 0.0;         // dual objective, never exceeds p_k beyond tolerance
  double gap = 0.0;
  double primal_res = 0.0;  // relative equality residual
  double dual_res = 0.0;    // relative dual residual
  int iterations = 0;
  std::vector<Eigen::MatrixXd> Z;  // PSD dual matrices, one per block
  std::vector<IterationLog> log;
  std::string message;
};

}  // namespace hocp
