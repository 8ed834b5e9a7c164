#pragma once

// Chance-constraint tightening through probabilistic reachable sets of the
// error dynamics, plus terminal-ingredient synthesis and validation.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "smpc/error.hpp"
#include "smpc/linalg.hpp"
#include "smpc/model.hpp"
#include "smpc/random.hpp"

namespace smpc {

/// Standard normal CDF via erfc, accurate in both tails.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

inline double normal_pdf(double z) {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

/// Standard normal quantile. Acklam's rational approximation (relative error
/// ~1e-9) followed by Halley refinement against the erfc-based CDF.
inline double inverse_normal_cdf(double p) {
  require(p > 0.0 && p < 1.0, ErrorKind::kConfig,
          "inverse_normal_cdf: probability must lie in (0, 1)");
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00, 2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;

  double z;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    z = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    z = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    z = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }

  for (int it = 0; it < 3; ++it) {
    // Work on the smaller tail so the residual keeps full relative precision.
    const double resid = z < 0.0 ? normal_cdf(z) - p
                                 : (1.0 - p) - 0.5 * std::erfc(z / std::numbers::sqrt2);
    const double u = resid / normal_pdf(z);
    z -= u / (1.0 + 0.5 * z * u);
  }
  return z;
}

/// Row tightening factor psi (identical for all rows).
///   exact Gaussian:    Phi^{-1}(1 - delta / n_c)
///   moment ambiguity:  sqrt((n_c - delta) / delta)
inline double tightening_factor(NoiseMode mode, double delta, int n_c) {
  require(delta > 0.0 && delta < 1.0, ErrorKind::kConfig, "delta must lie in (0, 1)");
  require(n_c >= 1, ErrorKind::kConfig, "need at least one state constraint");
  if (mode == NoiseMode::kExactGaussian) {
    require(delta / n_c <= 0.5, ErrorKind::kConfig,
            "Gaussian tightening requires delta / n_c <= 1/2");
    return inverse_normal_cdf(1.0 - delta / n_c);
  }
  return std::sqrt((n_c - delta) / delta);
}

/// Offsets h_j - psi * sqrt(H_j Sigma H_j^T); same H. A row whose offset
/// drops to <= 0 leaves the origin outside the set, which callers can test
/// with Polytope::origin_interior().
inline Polytope tighten(const Polytope& x_set, const Matrix& sigma, double psi) {
  require(sigma.rows() == x_set.dim() && sigma.cols() == x_set.dim(),
          ErrorKind::kDimension, "tighten: covariance size mismatch");
  Polytope out = x_set;
  for (Eigen::Index j = 0; j < x_set.H.rows(); ++j) {
    const double var = x_set.H.row(j) * sigma * x_set.H.row(j).transpose();
    out.h(j) -= psi * std::sqrt(std::max(var, 0.0));
  }
  return out;
}

struct TightenedSequence {
  std::vector<Polytope> sets;  // Z_0 ... Z_{N-1}
  double psi = 0.0;
  double delta = 0.0;
};

/// Z_i = tighten(X, Sigma_i, psi) for i = 0..N-1, N = cov.size() - 1.
/// Fails if any Z_i loses the origin from its interior.
inline TightenedSequence build_tightened_sequence(const Polytope& x_set,
                                                  const CovarianceSequence& cov,
                                                  double delta, NoiseMode mode) {
  require(cov.size() >= 2, ErrorKind::kConfig, "covariance sequence too short");
  TightenedSequence seq;
  seq.delta = delta;
  seq.psi = tightening_factor(mode, delta, static_cast<int>(x_set.n_constraints()));
  const std::size_t horizon = cov.size() - 1;
  for (std::size_t i = 0; i < horizon; ++i) {
    Polytope z = tighten(x_set, cov[i], seq.psi);
    if (!z.origin_interior()) {
      throw Error(ErrorKind::kSynthesis,
                  "origin excluded: tightened state set Z_" + std::to_string(i) +
                      " has a non-positive offset");
    }
    seq.sets.push_back(std::move(z));
  }
  return seq;
}

/// Terminal cost, gain (u = -Kf z), and level of Z_f = {z' Qf z <= alpha}.
struct TerminalIngredients {
  Matrix Qf;
  Matrix Kf;
  double alpha = 0.0;
};

/// sup { g' z : z' Qf z <= alpha } = sqrt(alpha g' Qf^{-1} g).
inline double ellipsoid_support(const Matrix& qf, double alpha, const Vector& g) {
  const Vector s = qf.ldlt().solve(g);
  return std::sqrt(alpha * std::max(0.0, g.dot(s)));
}

/// Exact containment {z' Qf z <= alpha} subset of {H z <= h}.
inline bool ellipsoid_in_polytope(const Matrix& qf, double alpha, const Polytope& p,
                                  double tol = 1e-12) {
  for (Eigen::Index j = 0; j < p.H.rows(); ++j) {
    const Vector g = p.H.row(j).transpose();
    if (ellipsoid_support(qf, alpha, g) > p.h(j) + tol * (1.0 + std::abs(p.h(j)))) {
      return false;
    }
  }
  return true;
}

/// Largest alpha with {z' Qf z <= alpha} inside the state box and mapped into
/// U by u = -Kf z: min over half-spaces g'z <= c of c^2 / (g' Qf^{-1} g).
inline double terminal_level(const Matrix& qf, const Matrix& kf,
                             const Polytope& terminal_box, const Polytope& u_set) {
  require(lambda_min(qf) > 0.0, ErrorKind::kSynthesis, "terminal cost Qf is not positive definite");
  const auto ldlt = qf.ldlt();
  double alpha = std::numeric_limits<double>::infinity();
  auto visit = [&](const Vector& g, double c) {
    if (!(c > 0.0)) {
      throw Error(ErrorKind::kSynthesis, "terminal set empty: half-space offset " +
                                             std::to_string(c) + " <= 0");
    }
    const double denom = g.dot(ldlt.solve(g));
    if (denom > 0.0) alpha = std::min(alpha, c * c / denom);
  };
  for (Eigen::Index j = 0; j < terminal_box.H.rows(); ++j) {
    visit(terminal_box.H.row(j).transpose(), terminal_box.h(j));
  }
  for (Eigen::Index j = 0; j < u_set.H.rows(); ++j) {
    visit(-kf.transpose() * u_set.H.row(j).transpose(), u_set.h(j));
  }
  require(std::isfinite(alpha), ErrorKind::kSynthesis, "terminal level is unbounded");
  return alpha;
}

/// Points on {z' Qf z = alpha}: angle-uniform in whitened coordinates for
/// n = 2, seeded Gaussian directions otherwise.
inline std::vector<Vector> ellipsoid_boundary_samples(const Matrix& qf, double alpha,
                                                      int count,
                                                      std::uint64_t seed = 0) {
  const Matrix l = cholesky(qf);
  const Eigen::Index n = qf.rows();
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(count));
  RandomStream stream(seed);
  for (int k = 0; k < count; ++k) {
    Vector y(n);
    if (n == 2) {
      const double th = 2.0 * std::numbers::pi * k / count;
      y << std::cos(th), std::sin(th);
    } else {
      for (Eigen::Index i = 0; i < n; ++i) y(i) = stream.standard_normal();
      y.normalize();
    }
    // z' Qf z = |L' z|^2 = alpha
    out.push_back(l.transpose().triangularView<Eigen::Upper>().solve(std::sqrt(alpha) * y));
  }
  return out;
}

struct InscribedPolytope {
  Polytope polytope;
  std::vector<Vector> vertices;
};

/// Polytope inscribed in {z' Qf z <= alpha}. In 2-D: the regular `facets`-gon
/// with vertices on the ellipse (in whitened coordinates); each facet is
/// tangent to the level alpha * cos^2(pi / facets). Other dimensions use the
/// whitened cube [-r, r]^n with r = sqrt(alpha / n) (2n facets).
inline InscribedPolytope inscribed_polytope(const Matrix& qf, double alpha, int facets) {
  const Matrix l = cholesky(qf);
  const Eigen::Index n = qf.rows();
  const auto to_z = [&](const Vector& y) -> Vector {
    return l.transpose().triangularView<Eigen::Upper>().solve(y);
  };
  InscribedPolytope out;
  const double r = std::sqrt(alpha);
  if (n == 2) {
    require(facets >= 3, ErrorKind::kConfig, "terminal polytope needs >= 3 facets");
    out.polytope.H.resize(facets, 2);
    out.polytope.h.resize(facets);
    const double half = std::numbers::pi / facets;
    for (int k = 0; k < facets; ++k) {
      const double th = 2.0 * half * k;
      Vector normal(2);
      normal << std::cos(th + half), std::sin(th + half);
      out.polytope.H.row(k) = (l * normal).transpose();
      out.polytope.h(k) = r * std::cos(half);
      Vector y(2);
      y << std::cos(th), std::sin(th);
      out.vertices.push_back(to_z(r * y));
    }
    return out;
  }
  const double side = r / std::sqrt(static_cast<double>(n));
  out.polytope.H.resize(2 * n, n);
  out.polytope.h = Vector::Constant(2 * n, side);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.polytope.H.row(i) = l.col(i).transpose();
    out.polytope.H.row(n + i) = -l.col(i).transpose();
  }
  const std::uint64_t corners = std::uint64_t{1} << n;
  for (std::uint64_t mask = 0; mask < corners; ++mask) {
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = (mask >> i) & 1U ? side : -side;
    out.vertices.push_back(to_z(y));
  }
  return out;
}

struct TerminalReport {
  bool input_admissible = false;  // -Kf z in U on the ellipsoid
  bool invariant = false;         // closed-loop successor stays in the ellipsoid
  bool lyapunov_decrease = false; // (A-BKf)'Qf(A-BKf) - Qf + Q + Kf'RKf <= 0
  double decrease_residual = 0.0; // lambda_max of the matrix above
  bool all() const { return input_admissible && invariant && lyapunov_decrease; }
};

inline TerminalReport validate_terminal(const TerminalIngredients& t, const LtiSystem& sys,
                                        const Matrix& q, const Matrix& r,
                                        const Polytope& u_set, int samples = 360) {
  TerminalReport rep;
  const Matrix acl = sys.A - sys.B * t.Kf;
  const Matrix m = acl.transpose() * t.Qf * acl - t.Qf + q +
                   t.Kf.transpose() * r * t.Kf;
  rep.decrease_residual = lambda_max(0.5 * (m + m.transpose()));
  rep.lyapunov_decrease = rep.decrease_residual <= 1e-8;

  // Exact support-function test on U, mapped through u = -Kf z.
  bool exact_ok = true;
  for (Eigen::Index j = 0; j < u_set.H.rows(); ++j) {
    const Vector g = -t.Kf.transpose() * u_set.H.row(j).transpose();
    if (ellipsoid_support(t.Qf, t.alpha, g) > u_set.h(j) * (1.0 + 1e-12)) exact_ok = false;
  }
  bool sampled_ok = true;
  bool invariant_ok = true;
  for (const Vector& z : ellipsoid_boundary_samples(t.Qf, t.alpha, samples)) {
    if (!u_set.contains(-t.Kf * z, 1e-9 * (1.0 + u_set.h.cwiseAbs().maxCoeff()))) {
      sampled_ok = false;
    }
    const Vector zn = acl * z;
    if (zn.dot(t.Qf * zn) > t.alpha * (1.0 + 1e-12)) invariant_ok = false;
  }
  rep.input_admissible = exact_ok && sampled_ok;
  rep.invariant = invariant_ok;
  return rep;
}

/// Monte Carlo frequency of H e_i <= psi * sqrt(diag(H Sigma_i H')) jointly
/// over all rows, for the error system e+ = A e + w, e_0 = 0, Gaussian w.
inline double empirical_prs_check(const NoiseModel& noise, const LtiSystem& sys, int i,
                                  double psi, const Polytope& x_set, int trials,
                                  std::uint64_t seed) {
  require(i >= 0, ErrorKind::kConfig, "step index must be >= 0");
  require(trials >= 1, ErrorKind::kConfig, "need at least one trial");
  const CovarianceSequence cov = propagate_covariance(sys, noise, std::max(i, 1));
  Vector bound(x_set.H.rows());
  for (Eigen::Index j = 0; j < bound.size(); ++j) {
    const double var = x_set.H.row(j) * cov[static_cast<std::size_t>(i)] *
                       x_set.H.row(j).transpose();
    bound(j) = psi * std::sqrt(std::max(var, 0.0));
  }
  const Matrix factor = noise_factor(noise.sigma_w);
  RandomStream stream(seed);
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    Vector e = Vector::Zero(sys.n_x());
    for (int k = 0; k < i; ++k) e = error_step(sys, e, sample_gaussian(factor, stream));
    if (((x_set.H * e - bound).array() <= 0.0).all()) ++hits;
  }
  return static_cast<double>(hits) / trials;
}

}  // namespace smpc
