#pragma once

// Tractable stochastic MPC with tightened constraints, in condensed form.
//
// The predicted nominal states are eliminated: with U = [u_0; ...; u_{N-1}],
// Z = [z_1; ...; z_N] = Phi x + Gamma U. The expected cost splits exactly into
// the nominal cost V^_N (solved here as a QP in U) plus the constant
//   c = sum_{i<N} Tr(Q Sigma_i) + Tr(Qf Sigma_N),
// which is added afterwards and never enters the QP.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "smpc/error.hpp"
#include "smpc/linalg.hpp"
#include "smpc/model.hpp"
#include "smpc/qp.hpp"
#include "smpc/tightening.hpp"

namespace smpc {

struct CostSpec {
  Matrix Q;
  Matrix R;
  Matrix Qf;
};

struct MpcOptions {
  int horizon = 10;
  double delta = 0.15;
  int terminal_facets = 16;
  QpSettings qp;
};

struct MpcProblemData {
  LtiSystem sys;
  NoiseModel noise;
  CostSpec cost;
  Polytope x_set;
  Polytope u_set;
  int horizon = 0;
  CovarianceSequence covariances;  // Sigma_0 ... Sigma_N
  TightenedSequence tightened;     // Z_0 ... Z_{N-1}
  Polytope terminal_box;           // tighten(X, Sigma_N, psi)
  TerminalIngredients terminal;
  InscribedPolytope terminal_polytope;
  double uncertainty_cost = 0.0;   // c

  // Condensed prediction Z = Phi x + Gamma U.
  Matrix Phi;
  Matrix Gamma;
  // QP in U: 1/2 U' H U + (F x)' U + x' Y x, subject to G U <= w + E x.
  Matrix H;
  Matrix F;
  Matrix Y;
  Matrix G;
  Vector w;
  Matrix E;
  HessianFactor h_factor;  // of H, shared by every online solve
  QpSettings qp;

  Eigen::Index n_x() const { return sys.n_x(); }
  Eigen::Index n_u() const { return sys.n_u(); }

  /// Nominal states z_1..z_N for an input sequence, via the condensed map.
  Vector predict(const Vector& x, const Vector& u_stack) const { return Phi * x + Gamma * u_stack; }
};

inline std::pair<Matrix, Matrix> condense(const LtiSystem& sys, int horizon) {
  const Eigen::Index nx = sys.n_x();
  const Eigen::Index nu = sys.n_u();
  Matrix phi(horizon * nx, nx);
  Matrix gamma = Matrix::Zero(horizon * nx, horizon * nu);
  Matrix power = Matrix::Identity(nx, nx);
  std::vector<Matrix> powers;  // A^0 .. A^{N-1}
  for (int i = 0; i < horizon; ++i) {
    powers.push_back(power);
    power = sys.A * power;
    phi.block(i * nx, 0, nx, nx) = power;
  }
  for (int i = 0; i < horizon; ++i) {      // row block: z_{i+1}
    for (int j = 0; j <= i; ++j) {         // input u_j
      gamma.block(i * nx, j * nu, nx, nu) = powers[static_cast<std::size_t>(i - j)] * sys.B;
    }
  }
  return {phi, gamma};
}

/// Precomputes every offline quantity: DARE terminal cost and gain, the
/// tightened sets, the maximal terminal level and its inscribed polytope,
/// the condensed QP matrices, and the uncertainty cost constant.
inline MpcProblemData assemble(const LtiSystem& sys, const NoiseModel& noise,
                               const Polytope& x_set, const Polytope& u_set,
                               const Matrix& q, const Matrix& r,
                               const MpcOptions& opts = {}) {
  sys.validate();
  noise.validate();
  x_set.validate();
  u_set.validate();
  require(x_set.dim() == sys.n_x(), ErrorKind::kDimension, "state constraint dimension mismatch");
  require(u_set.dim() == sys.n_u(), ErrorKind::kDimension, "input constraint dimension mismatch");
  require(opts.horizon >= 1, ErrorKind::kConfig, "horizon must be >= 1");
  require_symmetric(q, "Q");
  require_symmetric(r, "R");
  require(lambda_min(q) > 0.0, ErrorKind::kConfig, "Q must be positive definite");
  require(lambda_min(r) > 0.0, ErrorKind::kConfig, "R must be positive definite");
  require(x_set.origin_interior() && u_set.origin_interior(), ErrorKind::kConfig,
          "state and input sets must contain the origin in their interior");

  MpcProblemData d;
  d.sys = sys;
  d.noise = noise;
  d.x_set = x_set;
  d.u_set = u_set;
  d.horizon = opts.horizon;
  d.qp = opts.qp;

  DareSolution dare;
  try {
    dare = solve_dare(sys.A, sys.B, q, r);
  } catch (const Error& e) {
    throw Error(ErrorKind::kSynthesis, std::string("terminal cost: ") + e.what());
  }
  d.cost = {q, r, dare.P};

  const int n = opts.horizon;
  d.covariances = propagate_covariance(sys, noise, n);
  d.tightened = build_tightened_sequence(x_set, d.covariances, opts.delta, noise.mode);
  d.terminal_box = tighten(x_set, d.covariances.back(), d.tightened.psi);
  if (!d.terminal_box.origin_interior()) {
    throw Error(ErrorKind::kSynthesis, "origin excluded: terminal tightened set is empty near 0");
  }
  d.terminal = {dare.P, dare.K, terminal_level(dare.P, dare.K, d.terminal_box, u_set)};
  d.terminal_polytope = inscribed_polytope(dare.P, d.terminal.alpha, opts.terminal_facets);

  d.uncertainty_cost = (dare.P * d.covariances.back()).trace();
  for (int i = 0; i < n; ++i) {
    d.uncertainty_cost += (q * d.covariances[static_cast<std::size_t>(i)]).trace();
  }

  const Eigen::Index nx = sys.n_x();
  const Eigen::Index nu = sys.n_u();
  std::tie(d.Phi, d.Gamma) = condense(sys, n);

  // Block-diagonal stage weights on z_1..z_N (last block Qf) and u_0..u_{N-1}.
  Matrix qbar = Matrix::Zero(n * nx, n * nx);
  Matrix rbar = Matrix::Zero(n * nu, n * nu);
  for (int i = 0; i < n; ++i) {
    qbar.block(i * nx, i * nx, nx, nx) = (i == n - 1) ? dare.P : q;
    rbar.block(i * nu, i * nu, nu, nu) = r;
  }
  d.H = 2.0 * (d.Gamma.transpose() * qbar * d.Gamma + rbar);
  d.H = 0.5 * (d.H + d.H.transpose());
  d.h_factor = factor_hessian(d.H);
  d.F = 2.0 * d.Gamma.transpose() * qbar * d.Phi;
  d.Y = d.Phi.transpose() * qbar * d.Phi + q;

  // Constraint rows: z_0 = x in Z_0, inputs, z_i in Z_i (1 <= i < N), and
  // z_N in the inscribed terminal polytope.
  const Polytope& tp = d.terminal_polytope.polytope;
  const Eigen::Index rx = x_set.n_constraints();
  const Eigen::Index ru = u_set.n_constraints();
  const Eigen::Index rows = rx + n * ru + (n - 1) * rx + tp.n_constraints();
  d.G = Matrix::Zero(rows, n * nu);
  d.w = Vector::Zero(rows);
  d.E = Matrix::Zero(rows, nx);
  Eigen::Index row = 0;
  // z_0 = x does not depend on U: zero rows in G.
  d.w.segment(row, rx) = d.tightened.sets[0].h;
  d.E.block(row, 0, rx, nx) = -d.tightened.sets[0].H;
  row += rx;
  for (int i = 0; i < n; ++i) {
    d.G.block(row, i * nu, ru, nu) = u_set.H;
    d.w.segment(row, ru) = u_set.h;
    row += ru;
  }
  for (int i = 1; i < n; ++i) {
    const Polytope& zi = d.tightened.sets[static_cast<std::size_t>(i)];
    d.G.block(row, 0, rx, n * nu) = zi.H * d.Gamma.block((i - 1) * nx, 0, nx, n * nu);
    d.w.segment(row, rx) = zi.h;
    d.E.block(row, 0, rx, nx) = -zi.H * d.Phi.block((i - 1) * nx, 0, nx, nx);
    row += rx;
  }
  {
    const Eigen::Index rt = tp.n_constraints();
    d.G.block(row, 0, rt, n * nu) = tp.H * d.Gamma.block((n - 1) * nx, 0, nx, n * nu);
    d.w.segment(row, rt) = tp.h;
    d.E.block(row, 0, rt, nx) = -tp.H * d.Phi.block((n - 1) * nx, 0, nx, nx);
    row += rt;
  }
  return d;
}

enum class MpcStatus { kOptimal, kInfeasible, kIndeterminate };

inline const char* to_string(MpcStatus s) {
  switch (s) {
    case MpcStatus::kOptimal: return "optimal";
    case MpcStatus::kInfeasible: return "infeasible";
    case MpcStatus::kIndeterminate: return "indeterminate";
  }
  return "unknown";
}

struct MpcSolution {
  MpcStatus status = MpcStatus::kIndeterminate;
  std::vector<Vector> u_seq;  // u_{0|k} .. u_{N-1|k}
  std::vector<Vector> z_seq;  // z_{0|k} .. z_{N|k}
  double nominal_value = std::numeric_limits<double>::quiet_NaN();  // V^_N
  QpSolution qp;
};

inline QpProblem mpc_qp(const MpcProblemData& d, const Vector& x) {
  return {d.H, d.F * x, d.G, d.w + d.E * x};
}

inline MpcSolution solve_mpc(const MpcProblemData& d, const Vector& x,
                             const std::optional<QpWarmStart>& warm = std::nullopt) {
  require(x.size() == d.n_x(), ErrorKind::kDimension, "solve_mpc: state dimension mismatch");
  require(x.allFinite(), ErrorKind::kNumeric, "solve_mpc: non-finite state");
  MpcSolution out;
  out.qp = solve(mpc_qp(d, x), d.qp, warm, d.h_factor.ok ? &d.h_factor : nullptr);
  switch (out.qp.status) {
    case QpStatus::kPrimalInfeasible:
      out.status = MpcStatus::kInfeasible;
      out.nominal_value = std::numeric_limits<double>::infinity();
      return out;
    case QpStatus::kMaxIterations:
      out.status = MpcStatus::kIndeterminate;
      return out;
    case QpStatus::kOptimal:
      break;
  }
  out.status = MpcStatus::kOptimal;
  const Vector& u = out.qp.x;
  const Eigen::Index nx = d.n_x();
  const Eigen::Index nu = d.n_u();
  const Vector zs = d.predict(x, u);
  out.z_seq.push_back(x);
  for (int i = 0; i < d.horizon; ++i) {
    out.u_seq.push_back(u.segment(i * nu, nu));
    out.z_seq.push_back(zs.segment(i * nx, nx));
  }
  out.nominal_value = std::max(0.0, out.qp.objective + x.dot(d.Y * x));
  return out;
}

/// First input of the optimal sequence. Throws if x is not in the feasible
/// set; the guarded version lives in policy.hpp.
inline Vector mpc_policy(const MpcProblemData& d, const Vector& x) {
  const MpcSolution s = solve_mpc(d, x);
  if (s.status != MpcStatus::kOptimal) {
    throw Error(ErrorKind::kNumeric, std::string("mpc_policy: MPC is ") + to_string(s.status) +
                                         " at this state");
  }
  return s.u_seq.front();
}

/// V_N(x) = V^_N(x) + c; +inf when infeasible, NaN when the solver could not
/// decide.
inline double value_function(const MpcProblemData& d, const Vector& x) {
  const MpcSolution s = solve_mpc(d, x);
  switch (s.status) {
    case MpcStatus::kOptimal: return s.nominal_value + d.uncertainty_cost;
    case MpcStatus::kInfeasible: return std::numeric_limits<double>::infinity();
    case MpcStatus::kIndeterminate: return std::numeric_limits<double>::quiet_NaN();
  }
  return std::numeric_limits<double>::quiet_NaN();
}

/// V^_N(x): nominal part only (same sentinels as value_function).
inline double nominal_value(const MpcProblemData& d, const Vector& x) {
  return solve_mpc(d, x).nominal_value;
}

}  // namespace smpc
