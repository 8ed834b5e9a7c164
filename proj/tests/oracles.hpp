#pragma once

// Test-only reference computations. Nothing here shares code paths with the
// library beyond the Eigen matrix types.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>

namespace oracle {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct BruteForceQp {
  Vector x;
  double objective;
};

/// Strictly convex QP min 1/2 x'Px + q'x s.t. Ax <= b by enumerating every
/// active set, solving its equality-constrained KKT system, and keeping the
/// best point that is primal feasible with nonnegative multipliers.
inline std::optional<BruteForceQp> brute_force_qp(const Matrix& p, const Vector& q,
                                                  const Matrix& a, const Vector& b) {
  const int n = static_cast<int>(p.rows());
  const int m = static_cast<int>(a.rows());
  std::optional<BruteForceQp> best;
  for (std::uint32_t mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int na = static_cast<int>(act.size());
    if (na > n) continue;
    Matrix kkt = Matrix::Zero(n + na, n + na);
    Vector rhs(n + na);
    kkt.topLeftCorner(n, n) = p;
    rhs.head(n) = -q;
    for (int k = 0; k < na; ++k) {
      kkt.block(0, n + k, n, 1) = a.row(act[k]).transpose();
      kkt.block(n + k, 0, 1, n) = a.row(act[k]);
      rhs(n + k) = b(act[k]);
    }
    Eigen::FullPivLU<Matrix> lu(kkt);
    if (lu.rank() < n + na) continue;
    const Vector s = lu.solve(rhs);
    const Vector x = s.head(n);
    if (na > 0 && s.tail(na).minCoeff() < -1e-9) continue;
    if (m > 0 && (a * x - b).maxCoeff() > 1e-9) continue;
    const double obj = 0.5 * x.dot(p * x) + q.dot(x);
    if (!best || obj < best->objective) best = BruteForceQp{x, obj};
  }
  return best;
}

struct RandomQp {
  Matrix P;
  Vector q;
  Matrix A;
  Vector b;
};

/// Random strictly convex QP that is feasible by construction: b is set from
/// a sampled interior point plus a nonnegative slack.
inline RandomQp random_feasible_qp(std::mt19937_64& rng, int n, int m) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomQp out;
  Matrix l(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) l(i, j) = g(rng);
  out.P = l * l.transpose() + 0.1 * Matrix::Identity(n, n);
  out.q.resize(n);
  for (int i = 0; i < n; ++i) out.q(i) = 3.0 * g(rng);
  out.A.resize(m, n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.A(i, j) = g(rng);
  Vector x0(n);
  for (int i = 0; i < n; ++i) x0(i) = g(rng);
  out.b = out.A * x0;
  for (int i = 0; i < m; ++i) out.b(i) += 0.5 * u(rng);
  return out;
}

/// Eigenvalues of a symmetric 2x2 [[a, b], [b, c]] by the quadratic formula.
inline std::pair<double, double> eig2_sym(double a, double b, double c) {
  const double mean = 0.5 * (a + c);
  const double rad = std::sqrt(0.25 * (a - c) * (a - c) + b * b);
  return {mean - rad, mean + rad};
}

}  // namespace oracle
