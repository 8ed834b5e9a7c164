#pragma once

// Dual active-set QP solver (Goldfarb and Idnani) for strictly convex
// problems, P > 0. It starts from the unconstrained minimizer and adds the
// most violated constraint until the iterate is primal feasible, keeping the
// multipliers dual feasible throughout. The factorization J = L^{-T} of the
// Hessian is the only expensive offline quantity and may be shared across
// solves that differ only in q and b.
//
// Infeasibility is exact: when the violated row lies in the span of the
// active rows with nonpositive coefficients, those coefficients are a Farkas
// certificate.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "smpc/qp_types.hpp"

namespace smpc {

struct HessianFactor {
  Eigen::LLT<Matrix> llt;
  Matrix j0;  // upper triangular, j0 j0' = P^{-1}
  bool ok = false;
};

/// Cholesky of P with a conditioning guard. ok is false when P is not
/// numerically positive definite; callers then fall back to ADMM.
inline HessianFactor factor_hessian(const Matrix& p) {
  HessianFactor f;
  const Eigen::Index n = p.rows();
  if (p.cols() != n || !p.allFinite() ||
      max_abs(p - p.transpose()) > 1e-10 * std::max(1.0, max_abs(p))) {
    return f;
  }
  if (n == 0) {
    f.j0 = Matrix(0, 0);
    f.ok = true;
    return f;
  }
  f.llt.compute(p);
  if (f.llt.info() != Eigen::Success) return f;
  const Matrix l = f.llt.matrixL();
  const double dmin = l.diagonal().minCoeff();
  const double dmax = l.diagonal().maxCoeff();
  if (!(dmin > 1e-7 * dmax)) return f;
  f.j0 = l.transpose().triangularView<Eigen::Upper>().solve(Matrix::Identity(n, n));
  f.ok = true;
  return f;
}

namespace detail {

// Givens pair (c, s) with c a + s b = h, -s a + c b = 0 and c >= 0.
struct Givens {
  double c = 1.0;
  double s = 0.0;
  double h = 0.0;
};

inline Givens givens(double a, double b) {
  Givens g;
  g.h = std::hypot(a, b);
  if (g.h == 0.0) return g;
  g.c = a / g.h;
  g.s = b / g.h;
  if (g.c < 0.0) {
    g.c = -g.c;
    g.s = -g.s;
    g.h = -g.h;
  }
  return g;
}

}  // namespace detail

/// Solves the strictly convex QP. Returns kMaxIterations if the method
/// breaks down numerically; the result is then not a verdict.
inline QpSolution solve_active_set(const QpProblem& qp, const HessianFactor& factor,
                                   const QpSettings& settings = {}) {
  const Eigen::Index n = qp.P.rows();
  const Eigen::Index m = qp.A.rows();
  require(qp.P.cols() == n && qp.q.size() == n, ErrorKind::kDimension, "qp: P/q size mismatch");
  require(qp.A.cols() == n && qp.b.size() == m, ErrorKind::kDimension, "qp: A/b size mismatch");
  require(qp.P.allFinite() && qp.q.allFinite() && qp.A.allFinite() && qp.b.allFinite(),
          ErrorKind::kNumeric, "qp: non-finite problem data");
  require(factor.ok && factor.j0.rows() == n, ErrorKind::kNumeric,
          "active set: Hessian factor missing or not positive definite");

  QpSolution sol;
  sol.method = QpMethod::kActiveSet;
  sol.duals = Vector::Zero(m);
  sol.x = n > 0 ? Vector(-factor.llt.solve(qp.q)) : Vector(0);

  if (const Eigen::Index i = detail::violated_zero_row(qp, settings); i >= 0) {
    return detail::zero_row_infeasible(qp, i, QpMethod::kActiveSet);
  }
  Vector row_norm(m);
  for (Eigen::Index i = 0; i < m; ++i) row_norm(i) = qp.A.row(i).norm();

  Matrix j = factor.j0;
  Matrix r = Matrix::Zero(n, n);
  std::vector<Eigen::Index> active;
  std::vector<double> u;
  std::vector<char> is_active(static_cast<std::size_t>(m), 0);
  Vector& x = sol.x;
  Vector d(n);
  Vector z(n);

  auto add_constraint = [&]() -> bool {
    const Eigen::Index iq = static_cast<Eigen::Index>(active.size());
    for (Eigen::Index c = n - 1; c > iq; --c) {
      const detail::Givens g = detail::givens(d(c - 1), d(c));
      if (g.h == 0.0) continue;
      d(c - 1) = g.h;
      d(c) = 0.0;
      const double xny = g.s / (1.0 + g.c);
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t1 = j(k, c - 1);
        const double t2 = j(k, c);
        j(k, c - 1) = t1 * g.c + t2 * g.s;
        j(k, c) = xny * (t1 + j(k, c - 1)) - t2;
      }
    }
    r.col(iq).head(iq + 1) = d.head(iq + 1);
    return std::abs(d(iq)) > 1e-12 * std::max(1.0, r.diagonal().head(iq + 1).cwiseAbs().maxCoeff());
  };

  auto drop_constraint = [&](Eigen::Index l) {
    const Eigen::Index iq = static_cast<Eigen::Index>(active.size());
    is_active[static_cast<std::size_t>(active[static_cast<std::size_t>(l)])] = 0;
    active.erase(active.begin() + l);
    u.erase(u.begin() + l);
    for (Eigen::Index c = l; c < iq - 1; ++c) r.col(c) = r.col(c + 1);
    r.col(iq - 1).setZero();
    const Eigen::Index nq = iq - 1;
    for (Eigen::Index c = l; c < nq; ++c) {
      const detail::Givens g = detail::givens(r(c, c), r(c + 1, c));
      if (g.h == 0.0) continue;
      r(c, c) = g.h;
      r(c + 1, c) = 0.0;
      const double xny = g.s / (1.0 + g.c);
      for (Eigen::Index k = c + 1; k < nq; ++k) {
        const double t1 = r(c, k);
        const double t2 = r(c + 1, k);
        r(c, k) = t1 * g.c + t2 * g.s;
        r(c + 1, k) = xny * (t1 + r(c, k)) - t2;
      }
      for (Eigen::Index k = 0; k < n; ++k) {
        const double t1 = j(k, c);
        const double t2 = j(k, c + 1);
        j(k, c) = t1 * g.c + t2 * g.s;
        j(k, c + 1) = xny * (j(k, c) + t1) - t2;
      }
    }
  };

  auto finish = [&](int it) {
    sol.iterations = it;
    for (std::size_t k = 0; k < active.size(); ++k) sol.duals(active[k]) = std::max(0.0, u[k]);
    const detail::KktCheck kkt = detail::kkt_check(qp, x, sol.duals, settings);
    sol.primal_residual = kkt.primal;
    sol.dual_residual = kkt.dual;
    sol.objective = 0.5 * x.dot(qp.P * x) + qp.q.dot(x);
    sol.status = detail::kkt_ok(kkt, settings) ? QpStatus::kOptimal : QpStatus::kMaxIterations;
    return sol;
  };

  const double inf = std::numeric_limits<double>::infinity();
  for (int it = 0; it < settings.max_iter; ++it) {
    // Most violated inactive row, measured in distance units.
    const Vector ax = m > 0 ? Vector(qp.A * x) : Vector(0);
    Eigen::Index p = -1;
    double worst = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      if (is_active[static_cast<std::size_t>(i)] || row_norm(i) == 0.0) continue;
      const double excess = ax(i) - qp.b(i);
      const double tol = settings.abs_tol + settings.rel_tol * std::max(std::abs(ax(i)), std::abs(qp.b(i)));
      if (excess > tol && excess / row_norm(i) > worst) {
        worst = excess / row_norm(i);
        p = i;
      }
    }
    if (p < 0) return finish(it);

    // In the solver's convention the row reads n' x >= -b with n = -a.
    const Vector np = -qp.A.row(p).transpose();
    double u_p = 0.0;
    for (;;) {
      const Eigen::Index iq = static_cast<Eigen::Index>(active.size());
      d.noalias() = j.transpose() * np;
      z.noalias() = j.rightCols(n - iq) * d.tail(n - iq);
      Vector rr = r.topLeftCorner(iq, iq).triangularView<Eigen::Upper>().solve(d.head(iq));

      double t1 = inf;
      Eigen::Index l = -1;
      for (Eigen::Index k = 0; k < iq; ++k) {
        if (rr(k) > 0.0 && u[static_cast<std::size_t>(k)] / rr(k) < t1) {
          t1 = u[static_cast<std::size_t>(k)] / rr(k);
          l = k;
        }
      }
      double t2 = inf;
      const bool has_direction = d.tail(n - iq).norm() > 1e-10 * std::max(d.norm(), 1e-300);
      if (has_direction) t2 = (qp.A.row(p).dot(x) - qp.b(p)) / z.dot(np);

      if (t1 == inf && t2 == inf) {
        // a_p = sum_k rr_k a_k with rr <= 0 and the active rows tight at x.
        Vector y = Vector::Zero(m);
        y(p) = 1.0;
        for (Eigen::Index k = 0; k < iq; ++k) y(active[static_cast<std::size_t>(k)]) = -rr(k);
        y = y.cwiseMax(0.0);
        if (!verify_certificate(qp.A, qp.b, y, settings.eps_infeasible)) {
          sol.iterations = it;
          sol.status = QpStatus::kMaxIterations;
          return sol;
        }
        sol.status = QpStatus::kPrimalInfeasible;
        sol.certificate = y / y.maxCoeff();
        sol.iterations = it;
        return sol;
      }

      const double t = std::min(t1, t2);
      for (Eigen::Index k = 0; k < iq; ++k) u[static_cast<std::size_t>(k)] -= t * rr(k);
      u_p += t;
      if (t2 <= t1) {
        x += t * z;
        if (!add_constraint()) {
          sol.iterations = it;
          sol.status = QpStatus::kMaxIterations;
          return sol;
        }
        active.push_back(p);
        u.push_back(u_p);
        is_active[static_cast<std::size_t>(p)] = 1;
        break;
      }
      if (t2 < inf) x += t * z;
      drop_constraint(l);
    }
  }
  sol.iterations = settings.max_iter;
  sol.status = QpStatus::kMaxIterations;
  return sol;
}

}  // namespace smpc
