#pragma once

// Combined control policy: the MPC law inside the feasible set X_0, the
// zero back-up input outside of it. Also the extended Lyapunov candidate
//   V~_N(x) = V^_N(x)                          if x in X_0
//           = max_{a in [0,1]} {V^_N(a x) | a x in X_0}   otherwise.

#include <cmath>
#include <string>

#include "smpc/mpc.hpp"
#include "smpc/qp.hpp"

namespace smpc {

enum class Membership { kInside, kOutside, kIndeterminate };

inline const char* to_string(Membership m) {
  switch (m) {
    case Membership::kInside: return "inside";
    case Membership::kOutside: return "outside";
    case Membership::kIndeterminate: return "indeterminate";
  }
  return "unknown";
}

/// x in X_0 = {x in X | some admissible input sequence exists}. Decided by
/// the MPC QP itself: its constraints are exactly those of X_0, and its
/// strictly convex objective allows the exact active-set method.
inline Membership in_feasible_set(const MpcProblemData& d, const Vector& x) {
  require(x.size() == d.n_x(), ErrorKind::kDimension, "in_feasible_set: state dimension mismatch");
  switch (solve_mpc(d, x).status) {
    case MpcStatus::kOptimal: return Membership::kInside;
    case MpcStatus::kInfeasible: return Membership::kOutside;
    case MpcStatus::kIndeterminate: return Membership::kIndeterminate;
  }
  return Membership::kIndeterminate;
}

enum class Branch { kMpc, kBackup, kIndeterminateBackup };

inline const char* to_string(Branch b) {
  switch (b) {
    case Branch::kMpc: return "mpc";
    case Branch::kBackup: return "backup";
    case Branch::kIndeterminateBackup: return "indeterminate_backup";
  }
  return "unknown";
}

struct PolicyDecision {
  Vector input;
  Branch branch = Branch::kBackup;
  double value_nominal = std::numeric_limits<double>::quiet_NaN();  // V^_N when branch is mpc
  bool feasible = false;
};

/// u = mu_MPC(x) when the MPC is certified feasible, else the zero input.
/// The MPC solve itself decides membership: its QP has exactly the
/// constraints of the feasibility test.
inline PolicyDecision combined_policy(const MpcProblemData& d, const Vector& x) {
  PolicyDecision out;
  out.input = Vector::Zero(d.n_u());
  const MpcSolution s = solve_mpc(d, x);
  switch (s.status) {
    case MpcStatus::kOptimal:
      out.branch = Branch::kMpc;
      out.feasible = true;
      out.input = s.u_seq.front();
      out.value_nominal = s.nominal_value;
      break;
    case MpcStatus::kInfeasible:
      out.branch = Branch::kBackup;
      break;
    case MpcStatus::kIndeterminate:
      out.branch = Branch::kIndeterminateBackup;
      break;
  }
  return out;
}

/// Largest a in [0, 1] with a x in X_0, by bisection. X_0 is convex and
/// contains the origin, so the feasible scalings form an interval [0, a*].
/// Indeterminate verdicts count as infeasible, which keeps a* conservative.
inline double boundary_scaling(const MpcProblemData& d, const Vector& x, double tol = 1e-6) {
  require(tol > 0.0, ErrorKind::kConfig, "boundary_scaling: tol must be positive");
  if (in_feasible_set(d, x) == Membership::kInside) return 1.0;
  double lo = 0.0;
  double hi = 1.0;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (in_feasible_set(d, mid * x) == Membership::kInside) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

/// V~_N(x). Outside X_0 the ray maximum is attained at a*: V^_N is convex
/// with V^_N(0) = 0, hence nondecreasing along rays from the origin.
inline double lyapunov_candidate(const MpcProblemData& d, const Vector& x, double tol = 1e-6) {
  const MpcSolution s = solve_mpc(d, x);
  if (s.status == MpcStatus::kOptimal) return s.nominal_value;
  const double a = boundary_scaling(d, x, tol);
  const MpcSolution edge = solve_mpc(d, a * x);
  if (edge.status == MpcStatus::kOptimal) return edge.nominal_value;
  // a* sits on the boundary up to tol; step inward until the solve certifies.
  double back = a;
  for (int k = 0; k < 60 && back > 0.0; ++k) {
    back = std::max(0.0, back - tol * std::pow(2.0, k));
    const MpcSolution inner = solve_mpc(d, back * x);
    if (inner.status == MpcStatus::kOptimal) return inner.nominal_value;
  }
  return 0.0;
}

}  // namespace smpc
