#pragma once

// Dense convex QP front end
//
//   minimize    1/2 x' P x + q' x
//   subject to  A x <= b
//
// Strictly convex problems go to the dual active-set method, which is exact
// and fast for the small dense problems of condensed MPC. Everything else,
// and any active-set breakdown, goes to ADMM.

#include <optional>

#include "smpc/active_set.hpp"
#include "smpc/admm.hpp"
#include "smpc/qp_types.hpp"

namespace smpc {

/// Solves the QP. factor, when given, must be factor_hessian(qp.P); it lets
/// repeated solves with the same P skip the factorization. Warm starts only
/// affect ADMM.
inline QpSolution solve(const QpProblem& qp, const QpSettings& settings = {},
                        const std::optional<QpWarmStart>& warm = std::nullopt,
                        const HessianFactor* factor = nullptr) {
  if (settings.method != QpMethod::kAdmm) {
    HessianFactor local;
    if (factor == nullptr) {
      local = factor_hessian(qp.P);
      factor = &local;
    }
    if (factor->ok) {
      QpSolution s = solve_active_set(qp, *factor, settings);
      if (s.status != QpStatus::kMaxIterations || settings.method == QpMethod::kActiveSet) return s;
    } else if (settings.method == QpMethod::kActiveSet) {
      throw Error(ErrorKind::kNumeric, "active set: P is not positive definite");
    }
  }
  return solve_admm(qp, settings, warm);
}

enum class Feasibility { kFeasible, kInfeasible, kIndeterminate };

inline const char* to_string(Feasibility f) {
  switch (f) {
    case Feasibility::kFeasible: return "feasible";
    case Feasibility::kInfeasible: return "infeasible";
    case Feasibility::kIndeterminate: return "indeterminate";
  }
  return "unknown";
}

/// Verdict of the zero-objective QP over A x <= b. An iteration-capped solve
/// is reported as indeterminate, never as infeasible.
inline Feasibility check_feasible(const Matrix& a, const Vector& b,
                                  const QpSettings& settings = {}) {
  const Eigen::Index n = a.cols();
  const QpSolution s = solve({Matrix::Zero(n, n), Vector::Zero(n), a, b}, settings);
  switch (s.status) {
    case QpStatus::kOptimal: return Feasibility::kFeasible;
    case QpStatus::kPrimalInfeasible: return Feasibility::kInfeasible;
    case QpStatus::kMaxIterations: return Feasibility::kIndeterminate;
  }
  return Feasibility::kIndeterminate;
}

}  // namespace smpc
