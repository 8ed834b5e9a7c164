#pragma once

// Dense symmetric linear algebra for synthesis and certification:
// eigendecomposition, Cholesky, PSD square roots, and the discrete
// Riccati / Lyapunov solvers. Dimensions are tiny (n <= ~10), so everything
// here favours robustness over asymptotic speed.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "smpc/error.hpp"

namespace smpc {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

inline bool is_symmetric(const Matrix& s) {
  if (s.rows() != s.cols()) return false;
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) {
      if (std::abs(s(i, j) - s(j, i)) > 1e-12 * (1.0 + std::abs(s(i, j)))) {
        return false;
      }
    }
  }
  return true;
}

inline void require_symmetric(const Matrix& s, const std::string& name) {
  require(s.rows() == s.cols(), ErrorKind::kDimension, name + " must be square");
  require(all_finite(s), ErrorKind::kNumeric, name + " has non-finite entries");
  require(is_symmetric(s), ErrorKind::kNumeric, name + " is not symmetric");
}

inline void require_square(const Matrix& m, const std::string& name) {
  require(m.rows() == m.cols(), ErrorKind::kDimension, name + " must be square");
}

/// Max-norm of a matrix, ||M||_max = max_ij |M_ij|.
inline double max_abs(const Matrix& m) {
  return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

struct SymEig {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns, S * V = V * diag(values)
};

/// Cyclic Jacobi eigensolver for symmetric matrices.
inline SymEig sym_eig(const Matrix& s) {
  require_symmetric(s, "sym_eig input");
  const Eigen::Index n = s.rows();
  Matrix a = 0.5 * (s + s.transpose());
  Matrix v = Matrix::Identity(n, n);

  const double scale = std::max(1.0, max_abs(a));
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (std::sqrt(off) <= 1e-300 + 1e-17 * scale) break;

    for (Eigen::Index p = 0; p < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        for (Eigen::Index k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) < a(j, j); });
  SymEig out{Vector(n), Matrix(n, n)};
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

inline double lambda_min(const Matrix& s) { return sym_eig(s).values(0); }
inline double lambda_max(const Matrix& s) {
  const Vector ev = sym_eig(s).values;
  return ev(ev.size() - 1);
}

/// Lower-triangular L with L * L^T = S. Throws on a non-positive pivot.
inline Matrix cholesky(const Matrix& s) {
  require_symmetric(s, "cholesky input");
  const Eigen::Index n = s.rows();
  Matrix l = Matrix::Zero(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    double d = s(j, j);
    for (Eigen::Index k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) {
      throw Error(ErrorKind::kNumeric,
                  "not positive definite: pivot " + std::to_string(j) +
                      " is " + std::to_string(d));
    }
    l(j, j) = std::sqrt(d);
    for (Eigen::Index i = j + 1; i < n; ++i) {
      double v = s(i, j);
      for (Eigen::Index k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return l;
}

/// Symmetric PSD square root. Eigenvalues in [-1e-10, 0) are clamped to 0.
inline Matrix sqrt_psd(const Matrix& s) {
  const SymEig eig = sym_eig(s);
  Vector root(eig.values.size());
  for (Eigen::Index i = 0; i < root.size(); ++i) {
    const double lam = eig.values(i);
    if (lam < -1e-10) {
      throw Error(ErrorKind::kNumeric,
                  "not PSD: eigenvalue " + std::to_string(lam));
    }
    root(i) = std::sqrt(std::max(lam, 0.0));
  }
  Matrix r = eig.vectors * root.asDiagonal() * eig.vectors.transpose();
  return 0.5 * (r + r.transpose());
}

/// Max modulus over the (possibly complex) eigenvalues of a square matrix.
inline double spectral_radius(const Matrix& a) {
  require_square(a, "spectral_radius input");
  if (a.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(a, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

struct IterationOptions {
  double rel_tol = 1e-12;
  int max_iter = 100000;
};

/// Solves A^T P A - P + Q = 0 for stable A by the doubling iteration.
/// The transposed call solve_dlyap(A^T, W) gives the stationary covariance
/// of x+ = A x + w, i.e. S = A S A^T + W.
inline Matrix solve_dlyap(const Matrix& a, const Matrix& q,
                          IterationOptions opts = {.rel_tol = 1e-12, .max_iter = 200}) {
  require_square(a, "A");
  require_symmetric(q, "Q");
  require(q.rows() == a.rows(), ErrorKind::kDimension, "dlyap: Q/A size mismatch");
  require(spectral_radius(a) < 1.0, ErrorKind::kNumeric, "unstable A in solve_dlyap");

  // Doubling form of the same fixed point: P_{k+1} = P_k + A_k^T P_k A_k,
  // A_{k+1} = A_k^2. Sums 2^k terms of sum_i (A^T)^i Q A^i per step.
  Matrix p = q;
  Matrix ak = a;
  for (int it = 0; it < opts.max_iter; ++it) {
    const Matrix inc = ak.transpose() * p * ak;
    p += inc;
    ak = ak * ak;
    // The increment shrinks quadratically, so stop once it is below
    // rounding level rather than at rel_tol.
    if (max_abs(inc) <= 1e-17 * max_abs(p) || max_abs(ak) == 0.0) break;
  }
  // A few plain sweeps polish the residual to machine level.
  for (int it = 0; it < 3; ++it) p = a.transpose() * p * a + q;
  return 0.5 * (p + p.transpose());
}

struct DareSolution {
  Matrix P;  // stabilizing solution
  Matrix K;  // (R + B^T P B)^{-1} B^T P A, applied as u = -K x
  int iterations = 0;
};

/// Stabilizing DARE solution via the Riccati recursion
///   P <- Q + A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A,
/// started at P = Q, stopping on relative change <= rel_tol.
inline DareSolution solve_dare(const Matrix& a, const Matrix& b, const Matrix& q,
                               const Matrix& r, IterationOptions opts = {}) {
  require_square(a, "A");
  require(b.rows() == a.rows(), ErrorKind::kDimension, "dare: B rows != A rows");
  require_symmetric(q, "Q");
  require_symmetric(r, "R");
  require(q.rows() == a.rows(), ErrorKind::kDimension, "dare: Q size mismatch");
  require(r.rows() == b.cols(), ErrorKind::kDimension, "dare: R size mismatch");
  require(lambda_min(q) >= -1e-12, ErrorKind::kNumeric, "dare: Q is not PSD");
  require(lambda_min(r) > 0.0, ErrorKind::kNumeric, "dare: R is not positive definite");

  Matrix p = q;
  DareSolution out;
  bool converged = false;
  for (int it = 1; it <= opts.max_iter; ++it) {
    const Matrix btp = b.transpose() * p;
    const Matrix gain = (r + btp * b).ldlt().solve(btp * a);
    Matrix next = q + a.transpose() * p * a - a.transpose() * p * b * gain;
    next = 0.5 * (next + next.transpose());
    if (!next.allFinite()) break;
    const double change = max_abs(next - p);
    p = std::move(next);
    out.iterations = it;
    if (change <= opts.rel_tol * std::max(1.0, max_abs(p))) {
      converged = true;
      break;
    }
  }
  if (!converged) throw Error(ErrorKind::kNumeric, "DARE divergence");

  // Final sweeps polish the fixed point residual.
  for (int it = 0; it < 2; ++it) {
    const Matrix btp = b.transpose() * p;
    const Matrix gain = (r + btp * b).ldlt().solve(btp * a);
    p = q + a.transpose() * p * a - a.transpose() * p * b * gain;
    p = 0.5 * (p + p.transpose());
  }
  const Matrix btp = b.transpose() * p;
  out.K = (r + btp * b).ldlt().solve(btp * a);
  out.P = p;
  if (spectral_radius(a - b * out.K) >= 1.0) {
    throw Error(ErrorKind::kNumeric, "DARE divergence: closed loop not stabilized");
  }
  return out;
}

/// Residual of the Riccati identity Q + A^T P A - A^T P B (R+B^T P B)^{-1} B^T P A - P.
inline Matrix dare_residual(const Matrix& a, const Matrix& b, const Matrix& q,
                            const Matrix& r, const Matrix& p) {
  const Matrix btp = b.transpose() * p;
  return q + a.transpose() * p * a -
         a.transpose() * p * b * (r + btp * b).ldlt().solve(btp * a) - p;
}

}  // namespace smpc
