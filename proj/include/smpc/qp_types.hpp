#pragma once

// Problem, settings and result types shared by the QP solvers
//
//   minimize    1/2 x' P x + q' x
//   subject to  A x <= b

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "smpc/error.hpp"
#include "smpc/linalg.hpp"

namespace smpc {

struct QpProblem {
  Matrix P;  // n x n, PSD
  Vector q;  // n
  Matrix A;  // m x n
  Vector b;  // m
};

enum class QpMethod { kAuto, kActiveSet, kAdmm };

inline const char* to_string(QpMethod m) {
  switch (m) {
    case QpMethod::kAuto: return "auto";
    case QpMethod::kActiveSet: return "active_set";
    case QpMethod::kAdmm: return "admm";
  }
  return "unknown";
}

struct QpSettings {
  QpMethod method = QpMethod::kAuto;  // auto: active set when P > 0, else ADMM
  double abs_tol = 1e-8;
  double rel_tol = 1e-9;
  int max_iter = 200000;
  double eps_infeasible = 1e-7;  // Farkas tolerance, relative to row norms
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  int check_interval = 5;
  bool adaptive_rho = true;
  bool polish = true;
};

enum class QpStatus { kOptimal, kPrimalInfeasible, kMaxIterations };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::kOptimal: return "optimal";
    case QpStatus::kPrimalInfeasible: return "primal_infeasible";
    case QpStatus::kMaxIterations: return "max_iterations";
  }
  return "unknown";
}

struct QpSolution {
  QpStatus status = QpStatus::kMaxIterations;
  Vector x;
  double objective = 0.0;
  Vector duals;        // >= 0, one per inequality
  double primal_residual = 0.0;  // ||max(Ax - b, 0)||_inf
  double dual_residual = 0.0;    // ||Px + q + A'y||_inf
  Vector certificate;  // Farkas vector when primal_infeasible
  int iterations = 0;
  bool polished = false;
  QpMethod method = QpMethod::kAdmm;  // solver that produced the verdict
};

/// Optional starting point (x, y) in the problem's own units.
struct QpWarmStart {
  Vector x;
  Vector y;
};

/// Verifies y >= 0, ||A'y||_inf <= eps * m and b'y < -eps * m, where m is the
/// largest entry of y after weighting each row by its Euclidean norm.
inline bool verify_certificate(const Matrix& a, const Vector& b, const Vector& y,
                               double eps) {
  if (y.size() != a.rows() || !y.allFinite()) return false;
  double m = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double norm = a.row(i).norm();
    m = std::max(m, std::abs(y(i)) * (norm > 0.0 ? norm : 1.0));
  }
  if (!(m > 0.0)) return false;
  if (y.minCoeff() < -1e-12 * m) return false;
  const double stationarity = a.cols() == 0 ? 0.0 : (a.transpose() * y).cwiseAbs().maxCoeff();
  // A'y = 0 exactly (a combination of zero rows) proves infeasibility for any b'y < 0.
  if (stationarity == 0.0) return b.dot(y) < 0.0;
  return stationarity <= eps * m && b.dot(y) < -eps * m;
}

namespace detail {

inline double inf_norm(const Vector& v) { return v.size() == 0 ? 0.0 : v.cwiseAbs().maxCoeff(); }

struct KktCheck {
  double primal = 0.0;
  double dual = 0.0;
  double complementarity = 0.0;
  double eps_primal = 0.0;
  double eps_dual = 0.0;
};

inline KktCheck kkt_check(const QpProblem& qp, const Vector& x, const Vector& y,
                          const QpSettings& s) {
  KktCheck k;
  const Vector ax = qp.A * x;
  const Vector px = qp.P * x;
  const Vector aty = qp.A.transpose() * y;
  k.primal = ax.size() == 0 ? 0.0 : (ax - qp.b).cwiseMax(0.0).maxCoeff();
  k.dual = inf_norm(px + qp.q + aty);
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    k.complementarity = std::max(k.complementarity, std::abs(y(i) * (qp.b(i) - ax(i))));
  }
  k.eps_primal = s.abs_tol + s.rel_tol * std::max(inf_norm(ax), inf_norm(ax.cwiseMin(qp.b)));
  k.eps_dual = s.abs_tol + s.rel_tol * std::max({inf_norm(px), inf_norm(aty), inf_norm(qp.q)});
  return k;
}

/// First all-zero row whose bound 0 <= b_i fails beyond the primal
/// tolerance. Such rows decide feasibility exactly, independent of x.
inline Eigen::Index violated_zero_row(const QpProblem& qp, const QpSettings& s) {
  for (Eigen::Index i = 0; i < qp.A.rows(); ++i) {
    if (qp.b(i) < -(s.abs_tol + s.rel_tol * std::abs(qp.b(i))) && qp.A.row(i).isZero(0.0)) return i;
  }
  return -1;
}

/// Infeasibility verdict backed by the certificate e_i.
inline QpSolution zero_row_infeasible(const QpProblem& qp, Eigen::Index i, QpMethod method) {
  QpSolution sol;
  sol.method = method;
  sol.status = QpStatus::kPrimalInfeasible;
  sol.x = Vector::Zero(qp.P.rows());
  sol.duals = Vector::Zero(qp.A.rows());
  sol.certificate = Vector::Zero(qp.A.rows());
  sol.certificate(i) = 1.0;
  sol.primal_residual = -qp.b(i);
  return sol;
}

inline bool kkt_ok(const KktCheck& k, const QpSettings& s) {
  return k.primal <= k.eps_primal && k.dual <= k.eps_dual && k.complementarity <= s.abs_tol;
}

}  // namespace detail

}  // namespace smpc
