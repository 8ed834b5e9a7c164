#pragma once

// Certificates for input-to-state stability in probability (ISSp).
//
// For the autonomous system with V(x) = x' P x and A' P A - P < 0,
//   E[V(x+) - V(x) | x] = -x'(P - A'PA)x + Tr(P Sigma^w)
//                       <= -kappa * V(x) + rho,
// with kappa = lambda_min(P - A'PA) / lambda_max(P) and rho = Tr(P Sigma^w).
// The sublevel set {V <= gamma} with gamma > rho / kappa must lie in X_0 for
// the combined policy to inherit the property.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "smpc/linalg.hpp"
#include "smpc/mpc.hpp"
#include "smpc/policy.hpp"
#include "smpc/sim.hpp"
#include "smpc/tightening.hpp"

namespace smpc {

/// P solving A'PA - P = -Q_lyap, with A'PA - P < 0 checked.
inline Matrix autonomous_lyapunov(const Matrix& a, const Matrix& q_lyap) {
  require(spectral_radius(a) < 1.0, ErrorKind::kCertification,
          "autonomous dynamics are not asymptotically stable");
  const Matrix p = solve_dlyap(a, q_lyap);
  const Matrix dec = a.transpose() * p * a - p;
  require(lambda_max(0.5 * (dec + dec.transpose())) < 0.0, ErrorKind::kCertification,
          "A'PA - P is not negative definite");
  return p;
}

/// lambda_max(A'PA - P); negative iff P certifies the autonomous dynamics.
inline double lyapunov_decrease_margin(const Matrix& p, const Matrix& a) {
  const Matrix m = a.transpose() * p * a - p;
  return lambda_max(0.5 * (m + m.transpose()));
}

/// sigma_min^2((P - A'PA)^{1/2}) / sigma_max^2(P^{1/2}). Both roots are of
/// symmetric PSD matrices, so the squared singular values are eigenvalues.
inline double kappa_coefficient(const Matrix& p, const Matrix& a) {
  require(lambda_min(p) > 0.0, ErrorKind::kCertification, "P is not positive definite");
  const Matrix m = p - a.transpose() * p * a;
  const double lo = lambda_min(0.5 * (m + m.transpose()));
  require(lo > 0.0, ErrorKind::kCertification, "A'PA - P is not negative definite");
  return lo / lambda_max(p);
}

inline double rho_offset(const Matrix& p, const Matrix& sigma_w) {
  return (p * sigma_w).trace();
}

/// Exact E[V(x+) - V(x) | x] for x+ = A x + w.
inline double expected_decrease_autonomous(const Matrix& p, const Matrix& a,
                                           const Matrix& sigma_w, const Vector& x) {
  return x.dot((a.transpose() * p * a - p) * x) + rho_offset(p, sigma_w);
}

/// gamma_min = rho / kappa; V cannot be expected to decrease below it.
inline double gamma_threshold(const Matrix& p, const Matrix& a, const Matrix& sigma_w) {
  return rho_offset(p, sigma_w) / kappa_coefficient(p, a);
}

/// sum_{i<N} Tr((A^i)' Q A^i Sigma^w)
inline double mpc_noise_offset(const Matrix& q, const Matrix& a, const Matrix& sigma_w,
                               int horizon) {
  require(horizon >= 1, ErrorKind::kConfig, "horizon must be >= 1");
  double sum = 0.0;
  Matrix power = Matrix::Identity(a.rows(), a.cols());
  for (int i = 0; i < horizon; ++i) {
    sum += (power.transpose() * q * power * sigma_w).trace();
    power = a * power;
  }
  return sum;
}

struct SublevelCheck {
  bool inside = false;
  int samples = 0;
  std::optional<Vector> witness;  // first boundary point not certified in X_0
  Membership witness_verdict = Membership::kInside;
};

/// First boundary point of {x' P x = gamma} outside the polytope, if any.
inline std::optional<Vector> sublevel_polytope_witness(const Polytope& set, const Matrix& p,
                                                       double gamma, int n_samples,
                                                       std::uint64_t seed = 0) {
  for (const Vector& x : ellipsoid_boundary_samples(p, gamma, n_samples, seed)) {
    if (!set.contains(x)) return x;
  }
  return std::nullopt;
}

/// Samples the boundary of {x' P x <= gamma} and requires every sample to be
/// certified inside X_0. Both sets are convex, so a pass holds up to sampling
/// density; a failure comes with an exact witness.
inline SublevelCheck check_sublevel_in_x0(const MpcProblemData& d, const Matrix& p,
                                          double gamma, int n_samples = 720,
                                          std::uint64_t seed = 0) {
  require(gamma > 0.0, ErrorKind::kConfig, "gamma must be positive");
  SublevelCheck out;
  out.samples = n_samples;
  for (const Vector& x : ellipsoid_boundary_samples(p, gamma, n_samples, seed)) {
    const Membership m = in_feasible_set(d, x);
    if (m != Membership::kInside) {
      out.witness = x;
      out.witness_verdict = m;
      return out;
    }
  }
  out.inside = true;
  return out;
}

struct RecurrenceStats {
  int excursions = 0;
  std::map<int, int> hitting_times;  // hitting time -> count (returned excursions)
  int max_hitting_time = 0;
  int unreturned = 0;
  long inside_steps = 0;
  long outside_steps = 0;
};

/// Excursions out of X_0 from per-step verdicts. An excursion that first
/// leaves at step k has hitting time min{j >= 1 : x_{k+j} in X_0}.
/// Indeterminate verdicts count as outside.
inline void accumulate_recurrence(const std::vector<Membership>& flags, RecurrenceStats& stats) {
  std::size_t k = 0;
  while (k < flags.size()) {
    if (flags[k] == Membership::kInside) {
      ++stats.inside_steps;
      ++k;
      continue;
    }
    const std::size_t start = k;
    while (k < flags.size() && flags[k] != Membership::kInside) ++k;
    stats.outside_steps += static_cast<long>(k - start);
    ++stats.excursions;
    if (k == flags.size()) {
      ++stats.unreturned;
    } else {
      const int hit = static_cast<int>(k - start);
      ++stats.hitting_times[hit];
      stats.max_hitting_time = std::max(stats.max_hitting_time, hit);
    }
  }
}

inline RecurrenceStats recurrence_stats(const std::vector<TrajectoryRecord>& trajectories) {
  RecurrenceStats stats;
  for (const auto& t : trajectories) accumulate_recurrence(t.feasible, stats);
  return stats;
}

/// beta(s, i) = C * s * lambda^i
struct ExpBeta {
  double C = 1.0;
  double lambda = 0.5;
  double operator()(double s, int i) const { return C * s * std::pow(lambda, i); }
};

/// Exponential class-KL bound from the nominal dynamics: lambda between
/// rho(A) and 1, C = max_i ||A^i||_2 / lambda^i.
inline ExpBeta beta_from_dynamics(const Matrix& a, double lambda = -1.0) {
  const double sr = spectral_radius(a);
  require(sr < 1.0, ErrorKind::kCertification, "beta_from_dynamics: A is not stable");
  ExpBeta b;
  b.lambda = lambda > 0.0 ? lambda : 0.5 * (1.0 + sr);
  require(b.lambda > sr && b.lambda < 1.0, ErrorKind::kConfig, "lambda must lie in (rho(A), 1)");
  Matrix power = Matrix::Identity(a.rows(), a.cols());
  double c = 1.0;
  double scale = 1.0;
  for (int i = 1; i <= 100000; ++i) {
    power = a * power;
    scale *= b.lambda;
    const double ratio = power.operatorNorm() / scale;
    c = std::max(c, ratio);
    if (power.operatorNorm() < 1e-300 || (i > 50 && ratio < 1e-6 * c)) break;
  }
  b.C = c;
  return b;
}

/// Per-run worst excess max_{i <= M} (||x_i|| - beta(||x_0||, i)).
inline double issp_excess(const TrajectoryRecord& t, const ExpBeta& beta, int horizon) {
  const double s = t.states.front().norm();
  double worst = -std::numeric_limits<double>::infinity();
  const int last = std::min<int>(horizon, static_cast<int>(t.states.size()) - 1);
  for (int i = 0; i <= last; ++i) {
    worst = std::max(worst, t.states[static_cast<std::size_t>(i)].norm() - beta(s, i));
  }
  return worst;
}

/// Constant rho term: the ceil(level * n)-th smallest per-run excess of a
/// calibration ensemble, floored at 0.
inline double calibrate_rho(const std::vector<TrajectoryRecord>& calibration, const ExpBeta& beta,
                            int horizon, double level) {
  require(!calibration.empty(), ErrorKind::kConfig, "calibrate_rho: empty ensemble");
  std::vector<double> ex;
  ex.reserve(calibration.size());
  for (const auto& t : calibration) ex.push_back(issp_excess(t, beta, horizon));
  std::sort(ex.begin(), ex.end());
  const auto idx = static_cast<std::size_t>(
      std::clamp<double>(std::ceil(level * static_cast<double>(ex.size())) - 1.0, 0.0,
                         static_cast<double>(ex.size() - 1)));
  return std::max(0.0, ex[idx]);
}

struct IsspEmpirical {
  bool pass = false;
  double fraction = 0.0;
};

/// Fraction of runs with ||x_i|| <= beta(||x_0||, i) + rho for all i <= M;
/// passes iff the fraction is at least 1 - eps.
inline IsspEmpirical issp_empirical_check(const std::vector<TrajectoryRecord>& trajectories,
                                          double eps, int horizon, const ExpBeta& beta,
                                          double rho) {
  require(!trajectories.empty(), ErrorKind::kConfig, "issp_empirical_check: empty ensemble");
  int ok = 0;
  for (const auto& t : trajectories) {
    if (issp_excess(t, beta, horizon) <= rho) ++ok;
  }
  IsspEmpirical out;
  out.fraction = static_cast<double>(ok) / static_cast<double>(trajectories.size());
  out.pass = out.fraction >= 1.0 - eps;
  return out;
}

struct IsspCertificate {
  Matrix P;
  double spectral_radius = 0.0;
  double decrease_margin = 0.0;  // lambda_max(A'PA - P)
  bool assumption_stable = false;
  double kappa_coeff = 0.0;
  double rho = 0.0;
  double gamma_min = 0.0;
  double gamma = 0.0;
  bool sublevel_in_x0 = false;
  int sublevel_samples = 0;
  std::optional<Vector> witness;
  std::string sublevel_note;
  double mpc_offset = 0.0;  // sum_{i<N} Tr((A^i)' Q A^i Sigma^w)

  bool certified() const { return assumption_stable && sublevel_in_x0 && gamma > gamma_min; }
};

struct CertifyOptions {
  double gamma_factor = 1.1;
  int samples = 720;
  std::uint64_t seed = 0;
};

/// Runs every check. `p` is the Lyapunov matrix to certify; `mpc` may be
/// null when synthesis failed, in which case X_0 membership is decided only
/// through X_0 subset of X.
inline IsspCertificate certify(const LtiSystem& sys, const NoiseModel& noise, const Matrix& p,
                               const Matrix& q, int horizon, const Polytope& x_set,
                               const MpcProblemData* mpc, const CertifyOptions& opts = {}) {
  IsspCertificate c;
  c.P = p;
  c.spectral_radius = spectral_radius(sys.A);
  c.decrease_margin = lyapunov_decrease_margin(p, sys.A);
  c.assumption_stable = c.spectral_radius < 1.0 && c.decrease_margin < 0.0 && lambda_min(p) > 0.0;
  c.rho = rho_offset(p, noise.sigma_w);
  c.mpc_offset = mpc_noise_offset(q, sys.A, noise.sigma_w, horizon);
  if (!c.assumption_stable) {
    c.sublevel_note = "not evaluated: autonomous Lyapunov condition fails";
    return c;
  }
  c.kappa_coeff = kappa_coefficient(p, sys.A);
  c.gamma_min = c.rho / c.kappa_coeff;
  c.gamma = opts.gamma_factor * c.gamma_min;
  if (!(c.gamma > 0.0)) {
    // Noise-free: any small positive level works.
    c.gamma = 1e-12;
  }
  c.sublevel_samples = opts.samples;
  if (auto w = sublevel_polytope_witness(x_set, p, c.gamma, opts.samples, opts.seed)) {
    c.witness = w;
    c.sublevel_note = "boundary point outside the state constraints";
    return c;
  }
  if (mpc == nullptr) {
    c.sublevel_note = "not evaluated: MPC synthesis failed";
    return c;
  }
  const SublevelCheck s = check_sublevel_in_x0(*mpc, p, c.gamma, opts.samples, opts.seed);
  c.sublevel_in_x0 = s.inside;
  c.witness = s.witness;
  c.sublevel_note = s.inside ? "all boundary samples in X_0 (sampling-based)"
                             : std::string("boundary point ") + to_string(s.witness_verdict) +
                                   " of X_0";
  return c;
}

}  // namespace smpc
