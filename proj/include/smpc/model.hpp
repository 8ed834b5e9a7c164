#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "smpc/error.hpp"
#include "smpc/linalg.hpp"

namespace smpc {

/// x+ = A x + B u + w. Ts is carried for reporting only.
struct LtiSystem {
  Matrix A;
  Matrix B;
  double Ts = 0.0;

  Eigen::Index n_x() const { return A.rows(); }
  Eigen::Index n_u() const { return B.cols(); }

  void validate() const {
    require(A.rows() == A.cols(), ErrorKind::kDimension, "A must be square");
    require(B.rows() == A.rows(), ErrorKind::kDimension, "B must have n_x rows");
    require(A.allFinite() && B.allFinite(), ErrorKind::kNumeric,
            "system matrices must be finite");
  }
};

enum class NoiseMode {
  kExactGaussian,    // distribution known exactly (Gaussian)
  kMomentAmbiguity,  // only mean (zero) and covariance known
};

inline const char* to_string(NoiseMode m) {
  return m == NoiseMode::kExactGaussian ? "exact_gaussian" : "moment_ambiguity";
}

/// Zero-mean i.i.d. additive noise with covariance sigma_w.
struct NoiseModel {
  Matrix sigma_w;
  NoiseMode mode = NoiseMode::kExactGaussian;

  void validate() const {
    require_symmetric(sigma_w, "sigma_w");
    require(lambda_min(sigma_w) >= -1e-12, ErrorKind::kNumeric,
            "sigma_w must be positive semidefinite");
  }
};

/// {x | H x <= h}
struct Polytope {
  Matrix H;
  Vector h;

  Eigen::Index n_constraints() const { return H.rows(); }
  Eigen::Index dim() const { return H.cols(); }

  void validate() const {
    require(H.rows() == h.size(), ErrorKind::kDimension, "polytope: H rows != h size");
    require(H.allFinite() && h.allFinite(), ErrorKind::kNumeric,
            "polytope data must be finite");
    for (Eigen::Index j = 0; j < H.rows(); ++j) {
      require(H.row(j).cwiseAbs().maxCoeff() > 0.0, ErrorKind::kConfig,
              "polytope row " + std::to_string(j) + " is all-zero");
    }
  }

  bool contains(const Vector& x, double tol = 0.0) const {
    return ((H * x - h).array() <= tol).all();
  }

  /// 0 in int: H*0 < h strictly.
  bool origin_interior() const { return (h.array() > 0.0).all(); }

  /// Box lo <= x <= hi as 2n rows, ordered upper bounds first then lower.
  static Polytope box(const Vector& lo, const Vector& hi) {
    require(lo.size() == hi.size(), ErrorKind::kDimension, "box bounds size mismatch");
    const Eigen::Index n = lo.size();
    Polytope p{Matrix::Zero(2 * n, n), Vector(2 * n)};
    for (Eigen::Index i = 0; i < n; ++i) {
      require(lo(i) < hi(i), ErrorKind::kConfig, "box lower bound must be below upper");
      p.H(i, i) = 1.0;
      p.h(i) = hi(i);
      p.H(n + i, i) = -1.0;
      p.h(n + i) = -lo(i);
    }
    return p;
  }
};

/// Sigma^x_0 ... Sigma^x_N with Sigma^x_0 = 0.
using CovarianceSequence = std::vector<Matrix>;

inline Vector step(const LtiSystem& sys, const Vector& x, const Vector& u,
                   const Vector& w) {
  require(x.size() == sys.n_x() && w.size() == sys.n_x() && u.size() == sys.n_u(),
          ErrorKind::kDimension, "step: dimension mismatch");
  return sys.A * x + sys.B * u + w;
}

inline Vector nominal_step(const LtiSystem& sys, const Vector& z, const Vector& u) {
  require(z.size() == sys.n_x() && u.size() == sys.n_u(), ErrorKind::kDimension,
          "nominal_step: dimension mismatch");
  return sys.A * z + sys.B * u;
}

inline Vector error_step(const LtiSystem& sys, const Vector& e, const Vector& w) {
  require(e.size() == sys.n_x() && w.size() == sys.n_x(), ErrorKind::kDimension,
          "error_step: dimension mismatch");
  return sys.A * e + w;
}

inline CovarianceSequence propagate_covariance(const LtiSystem& sys,
                                               const NoiseModel& noise, int horizon) {
  require(horizon >= 1, ErrorKind::kConfig, "horizon must be >= 1");
  require(noise.sigma_w.rows() == sys.n_x(), ErrorKind::kDimension,
          "sigma_w size does not match the state dimension");
  CovarianceSequence seq;
  seq.reserve(static_cast<std::size_t>(horizon) + 1);
  seq.push_back(Matrix::Zero(sys.n_x(), sys.n_x()));
  for (int i = 0; i < horizon; ++i) {
    Matrix next = sys.A * seq.back() * sys.A.transpose() + noise.sigma_w;
    seq.push_back(0.5 * (next + next.transpose()));
  }
  return seq;
}

/// ||w||_{L2} = sqrt(Tr Sigma^w).
inline double l2_noise_norm(const NoiseModel& noise) {
  return std::sqrt(std::max(0.0, noise.sigma_w.trace()));
}

}  // namespace smpc
