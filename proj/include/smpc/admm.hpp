#pragma once

// Operator splitting (ADMM) QP solver with over-relaxation and adaptive step
// size, in the spirit of OSQP. Handles any PSD P, including P = 0. Two
// post-processing stages make verdicts trustworthy:
//
//  * polishing: once the iterates settle, the active set is guessed and the
//    reduced KKT system is solved directly; the result is accepted only if it
//    passes the full optimality test;
//  * certificate extraction: divergence of the dual iterates gives a Farkas
//    direction y >= 0 with A'y ~ 0 and b'y < 0, which is sharpened by
//    projecting onto the null space of its support rows and then verified.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "smpc/qp_types.hpp"

namespace smpc {

/// ADMM solve. Never throws on hard problems; non-finite data is rejected.
inline QpSolution solve_admm(const QpProblem& qp, const QpSettings& settings = {},
                        const std::optional<QpWarmStart>& warm = std::nullopt) {
  using detail::inf_norm;
  const Eigen::Index n = qp.P.rows();
  const Eigen::Index m = qp.A.rows();
  require(qp.P.cols() == n && qp.q.size() == n, ErrorKind::kDimension, "qp: P/q size mismatch");
  require(qp.A.cols() == n && qp.b.size() == m, ErrorKind::kDimension, "qp: A/b size mismatch");
  require(qp.P.allFinite() && qp.q.allFinite() && qp.A.allFinite() && qp.b.allFinite(),
          ErrorKind::kNumeric, "qp: non-finite problem data");

  QpSolution sol;
  sol.x = Vector::Zero(n);
  sol.duals = Vector::Zero(m);

  // Zero rows are either satisfied within tolerance or an immediate contradiction.
  if (const Eigen::Index i = detail::violated_zero_row(qp, settings); i >= 0) {
    return detail::zero_row_infeasible(qp, i, QpMethod::kAdmm);
  }
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (qp.A.row(i).norm() > 0.0) rows.push_back(i);
  }
  const Eigen::Index mr = static_cast<Eigen::Index>(rows.size());

  // Row-normalized, cost-scaled working copy.
  Vector row_norm(mr);
  Matrix as(mr, n);
  Vector bs(mr);
  for (Eigen::Index k = 0; k < mr; ++k) {
    const Eigen::Index i = rows[static_cast<std::size_t>(k)];
    row_norm(k) = qp.A.row(i).norm();
    as.row(k) = qp.A.row(i) / row_norm(k);
    bs(k) = qp.b(i) / row_norm(k);
  }
  const double cost_scale = 1.0 / std::max({1.0, max_abs(qp.P), inf_norm(qp.q)});
  const bool zero_objective = max_abs(qp.P) == 0.0 && inf_norm(qp.q) == 0.0;
  const Matrix ps = cost_scale * qp.P;
  const Vector qs = cost_scale * qp.q;

  // Scaled dual y_s maps back as y_i = y_s / (cost_scale * row_norm).
  auto unscale_duals = [&](const Vector& ys) {
    Vector y = Vector::Zero(m);
    for (Eigen::Index k = 0; k < mr; ++k) {
      y(rows[static_cast<std::size_t>(k)]) = std::max(0.0, ys(k)) / (cost_scale * row_norm(k));
    }
    return y;
  };
  auto expand_certificate = [&](const Vector& ys) {
    Vector y = Vector::Zero(m);
    for (Eigen::Index k = 0; k < mr; ++k) {
      y(rows[static_cast<std::size_t>(k)]) = std::max(0.0, ys(k)) / row_norm(k);
    }
    const double top = inf_norm(y);
    return top > 0.0 ? Vector(y / top) : y;
  };
  auto finish_optimal = [&](const Vector& x, const Vector& y, bool polished, int it) {
    sol.status = QpStatus::kOptimal;
    sol.x = x;
    sol.duals = y;
    const detail::KktCheck k = detail::kkt_check(qp, x, y, settings);
    sol.primal_residual = k.primal;
    sol.dual_residual = k.dual;
    sol.objective = 0.5 * x.dot(qp.P * x) + qp.q.dot(x);
    sol.polished = polished;
    sol.iterations = it;
    return sol;
  };

  Vector x = Vector::Zero(n);
  Vector z = Vector::Zero(mr);
  Vector y = Vector::Zero(mr);
  if (warm) {
    if (warm->x.size() == n) x = warm->x;
    if (warm->y.size() == m) {
      for (Eigen::Index k = 0; k < mr; ++k) {
        y(k) = cost_scale * row_norm(k) * std::max(0.0, warm->y(rows[static_cast<std::size_t>(k)]));
      }
    }
  }
  z = (as * x).cwiseMin(bs);

  double rho = settings.rho;
  const double sigma = settings.sigma;
  const double alpha = settings.alpha;
  auto factor = [&](double r) {
    Matrix k = ps + sigma * Matrix::Identity(n, n) + r * as.transpose() * as;
    return Eigen::LLT<Matrix>(k);
  };
  Eigen::LLT<Matrix> llt = factor(rho);

  // Reduced KKT solve on a guessed active set, with iterative refinement
  // against the unregularized system.
  std::vector<Eigen::Index> last_active;
  bool last_active_valid = false;
  auto try_polish = [&](const Vector& zs, const Vector& ys, int it) -> bool {
    std::vector<Eigen::Index> active;
    for (Eigen::Index k = 0; k < mr; ++k) {
      if (ys(k) > bs(k) - zs(k)) active.push_back(k);
    }
    if (last_active_valid && active == last_active) return false;
    last_active = active;
    last_active_valid = true;
    const Eigen::Index na = static_cast<Eigen::Index>(active.size());
    Matrix kkt = Matrix::Zero(n + na, n + na);
    Vector rhs(n + na);
    kkt.topLeftCorner(n, n) = ps;
    rhs.head(n) = -qs;
    for (Eigen::Index k = 0; k < na; ++k) {
      const Eigen::Index r = active[static_cast<std::size_t>(k)];
      kkt.block(0, n + k, n, 1) = as.row(r).transpose();
      kkt.block(n + k, 0, 1, n) = as.row(r);
      rhs(n + k) = bs(r);
    }
    const double delta = 1e-9;
    Matrix reg = kkt;
    reg.topLeftCorner(n, n).diagonal().array() += delta;
    reg.bottomRightCorner(na, na).diagonal().array() -= delta;
    const Eigen::PartialPivLU<Matrix> lu(reg);
    Vector s = lu.solve(rhs);
    for (int ref = 0; ref < 10; ++ref) {
      const Vector res = rhs - kkt * s;
      if (!res.allFinite() || inf_norm(res) <= 1e-15 * (1.0 + inf_norm(rhs))) break;
      s += lu.solve(res);
    }
    if (!s.allFinite()) return false;
    Vector yfull = Vector::Zero(mr);
    for (Eigen::Index k = 0; k < na; ++k) {
      yfull(active[static_cast<std::size_t>(k)]) = s(n + k);
    }
    if (na > 0 && yfull.minCoeff() < -1e-9 * std::max(1.0, inf_norm(yfull))) return false;
    const Vector xp = s.head(n);
    const Vector yp = unscale_duals(yfull);
    if (!detail::kkt_ok(detail::kkt_check(qp, xp, yp, settings), settings)) return false;
    finish_optimal(xp, yp, true, it);
    return true;
  };

  // Sharpen an approximate Farkas direction: restrict to its support and
  // project onto the null space of the support rows' transposes.
  auto try_certificate = [&](const Vector& dir) -> bool {
    Vector yc = dir.cwiseMax(0.0);
    const double top = inf_norm(yc);
    if (!(top > 0.0)) return false;
    yc /= top;
    if (!(bs.dot(yc) < 0.0)) return false;
    const auto accept = [&](const Vector& cand) {
      const Vector full = expand_certificate(cand);
      if (verify_certificate(qp.A, qp.b, full, settings.eps_infeasible)) {
        sol.status = QpStatus::kPrimalInfeasible;
        sol.certificate = full;
        return true;
      }
      return false;
    };
    if (accept(yc)) return true;
    std::vector<Eigen::Index> support;
    for (Eigen::Index k = 0; k < mr; ++k) {
      if (yc(k) > 1e-6) support.push_back(k);
    }
    const Eigen::Index ns = static_cast<Eigen::Index>(support.size());
    if (ns == 0) return false;
    Matrix at(n, ns);
    Vector ysup(ns);
    for (Eigen::Index k = 0; k < ns; ++k) {
      at.col(k) = as.row(support[static_cast<std::size_t>(k)]).transpose();
      ysup(k) = yc(support[static_cast<std::size_t>(k)]);
    }
    Eigen::FullPivLU<Matrix> lu(at);
    lu.setThreshold(1e-10);
    const Matrix kernel = lu.kernel();
    if (kernel.cols() == 0 || (kernel.cols() == 1 && kernel.norm() == 0.0)) return false;
    const Vector coeff = kernel.colPivHouseholderQr().solve(ysup);
    const Vector proj = kernel * coeff;
    Vector cand = Vector::Zero(mr);
    for (Eigen::Index k = 0; k < ns; ++k) cand(support[static_cast<std::size_t>(k)]) = proj(k);
    return accept(cand);
  };

  Vector y_prev = y;
  const int check = std::max(1, settings.check_interval);
  int it = 0;
  for (it = 1; it <= settings.max_iter; ++it) {
    const Vector rhs = sigma * x - qs + as.transpose() * (rho * z - y);
    const Vector xt = llt.solve(rhs);
    const Vector zt = as * xt;
    x = alpha * xt + (1.0 - alpha) * x;
    const Vector zr = alpha * zt + (1.0 - alpha) * z;
    const Vector z_next = (zr + y / rho).cwiseMin(bs);
    y_prev = y;
    y = y + rho * (zr - z_next);
    z = z_next;

    if (it % check != 0) continue;

    const Vector yo = unscale_duals(y);
    const detail::KktCheck k = detail::kkt_check(qp, x, yo, settings);
    if (detail::kkt_ok(k, settings)) return finish_optimal(x, yo, false, it);
    // With a zero objective, y = 0 is an exact dual for any feasible x.
    if (zero_objective && k.primal <= k.eps_primal) {
      return finish_optimal(x, Vector::Zero(m), false, it);
    }
    if (settings.polish && k.primal <= std::max(1e-5, 1e3 * k.eps_primal) &&
        k.dual <= std::max(1e-5, 1e3 * k.eps_dual)) {
      if (try_polish(z, y, it)) return sol;
    }

    const Vector dy = y - y_prev;
    if (mr > 0 && inf_norm(dy) > 0.0 && bs.dot(dy.cwiseMax(0.0)) < 0.0) {
      if (try_certificate(dy)) {
        sol.iterations = it;
        sol.x = x;
        return sol;
      }
      // y itself grows along the certificate direction; its support is
      // often cleaner than the one-step difference.
      if (it % (10 * check) == 0 && try_certificate(y)) {
        sol.iterations = it;
        sol.x = x;
        return sol;
      }
    }

    if (settings.adaptive_rho && it % (5 * check) == 0 && mr > 0) {
      const Vector ax = as * x;
      const double rp = inf_norm(ax - z) / std::max({inf_norm(ax), inf_norm(z), 1e-30});
      const double rd = inf_norm(ps * x + qs + as.transpose() * y) /
                        std::max({inf_norm(ps * x), inf_norm(as.transpose() * y), inf_norm(qs), 1e-30});
      if (rp > 0.0 && rd > 0.0) {
        const double next = std::clamp(rho * std::sqrt(rp / rd), 1e-6, 1e6);
        if (next > 5.0 * rho || next < 0.2 * rho) {
          rho = next;
          llt = factor(rho);
        }
      }
    }
  }

  sol.status = QpStatus::kMaxIterations;
  sol.iterations = settings.max_iter;
  sol.x = x;
  sol.duals = unscale_duals(y);
  const detail::KktCheck k = detail::kkt_check(qp, x, sol.duals, settings);
  sol.primal_residual = k.primal;
  sol.dual_residual = k.dual;
  sol.objective = 0.5 * x.dot(qp.P * x) + qp.q.dot(x);
  return sol;
}

}  // namespace smpc
