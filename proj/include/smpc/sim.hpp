#pragma once

// Seeded Monte Carlo simulation of the autonomous and closed-loop system.
// Every run owns a random stream derived from (master_seed, run index), so
// an ensemble is bit-identical regardless of thread count or run order.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include "smpc/model.hpp"
#include "smpc/policy.hpp"
#include "smpc/random.hpp"

namespace smpc {

enum class SimMode { kAutonomous, kMpcCombined };

inline const char* to_string(SimMode m) {
  return m == SimMode::kAutonomous ? "autonomous" : "mpc";
}

struct SimConfig {
  SimMode mode = SimMode::kAutonomous;
  int n_runs = 100;
  int steps = 200;
  std::uint64_t master_seed = 1;
  std::vector<Vector> initial_states;  // one (replicated) or n_runs entries

  void validate() const {
    require(n_runs >= 1, ErrorKind::kConfig, "n_runs must be >= 1");
    require(steps >= 1, ErrorKind::kConfig, "steps must be >= 1");
    require(initial_states.size() == 1 ||
                initial_states.size() == static_cast<std::size_t>(n_runs),
            ErrorKind::kConfig, "initial_states must hold one state or one per run");
  }

  const Vector& initial_state(int run) const {
    return initial_states.size() == 1 ? initial_states.front()
                                      : initial_states[static_cast<std::size_t>(run)];
  }
};

/// One run. Per-state sequences have steps + 1 entries; inputs have steps.
/// branches[steps] is the decision at the final state (not applied).
struct TrajectoryRecord {
  int run_id = 0;
  std::vector<Vector> states;
  std::vector<Vector> inputs;
  std::vector<Branch> branches;
  std::vector<double> lyapunov_V;   // x' P x
  std::vector<double> candidate_V;  // V~_N(x), NaN when not recorded
  std::vector<Membership> feasible;
  std::vector<bool> violated;       // x not in X

  int steps() const { return static_cast<int>(inputs.size()); }
};

struct SimContext {
  LtiSystem sys;
  Matrix noise_factor;                  // L with L L' = Sigma^w
  const MpcProblemData* mpc = nullptr;  // required for kMpcCombined
  Polytope x_set;                       // for violation flags
  Matrix lyapunov_P;                    // V(x) = x' P x; empty to skip
  bool record_candidate = false;        // V~_N per step (mpc data required)
  double candidate_tol = 1e-6;
  bool record_feasibility = true;       // X_0 verdicts in autonomous mode
};

inline std::uint64_t noise_stream_index(int run) { return static_cast<std::uint64_t>(run); }

/// Draws w ~ N(0, Sigma^w) from the stream.
inline Vector sample_gaussian_noise(const Matrix& sigma_w, RandomStream& stream) {
  return sample_gaussian(noise_factor(sigma_w), stream);
}

inline TrajectoryRecord run_closed_loop(const SimContext& ctx, SimMode mode, const Vector& x0,
                                        int steps, RandomStream& stream) {
  require(x0.size() == ctx.sys.n_x(), ErrorKind::kDimension, "initial state dimension mismatch");
  require(mode == SimMode::kAutonomous || ctx.mpc != nullptr, ErrorKind::kConfig,
          "closed-loop simulation needs assembled MPC data");
  TrajectoryRecord rec;
  const auto n = static_cast<std::size_t>(steps) + 1;
  rec.states.reserve(n);
  rec.inputs.reserve(n - 1);
  rec.states.push_back(x0);
  for (int k = 0; k <= steps; ++k) {
    const Vector x = rec.states.back();
    PolicyDecision dec;
    Membership member = Membership::kIndeterminate;
    if (mode == SimMode::kMpcCombined) {
      dec = combined_policy(*ctx.mpc, x);
      member = dec.branch == Branch::kMpc      ? Membership::kInside
               : dec.branch == Branch::kBackup ? Membership::kOutside
                                               : Membership::kIndeterminate;
    } else {
      dec.input = Vector::Zero(ctx.sys.n_u());
      dec.branch = Branch::kBackup;
      if (ctx.mpc != nullptr && ctx.record_feasibility) member = in_feasible_set(*ctx.mpc, x);
    }
    rec.branches.push_back(dec.branch);
    rec.feasible.push_back(member);
    rec.violated.push_back(ctx.x_set.H.size() > 0 && !ctx.x_set.contains(x));
    rec.lyapunov_V.push_back(ctx.lyapunov_P.size() > 0 ? x.dot(ctx.lyapunov_P * x)
                                                       : std::numeric_limits<double>::quiet_NaN());
    double cand = std::numeric_limits<double>::quiet_NaN();
    if (ctx.record_candidate && ctx.mpc != nullptr) {
      cand = dec.branch == Branch::kMpc ? dec.value_nominal
                                        : lyapunov_candidate(*ctx.mpc, x, ctx.candidate_tol);
    }
    rec.candidate_V.push_back(cand);
    if (k == steps) break;
    const Vector w = sample_gaussian(ctx.noise_factor, stream);
    rec.inputs.push_back(dec.input);
    rec.states.push_back(step(ctx.sys, x, dec.input, w));
  }
  return rec;
}

/// SMPC_THREADS if set to a positive integer, else hardware concurrency.
inline int thread_count_from_env() {
  if (const char* env = std::getenv("SMPC_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

inline std::vector<TrajectoryRecord> monte_carlo(const SimConfig& cfg, const SimContext& ctx,
                                                 int threads = 1) {
  cfg.validate();
  std::vector<TrajectoryRecord> out(static_cast<std::size_t>(cfg.n_runs));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int r = next++; r < cfg.n_runs; r = next++) {
      RandomStream stream(cfg.master_seed, noise_stream_index(r));
      TrajectoryRecord rec = run_closed_loop(ctx, cfg.mode, cfg.initial_state(r), cfg.steps, stream);
      rec.run_id = r;
      out[static_cast<std::size_t>(r)] = std::move(rec);
    }
  };
  const int n_threads = std::clamp(threads, 1, cfg.n_runs);
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return out;
}

/// Per step k, the fraction of runs with x_k outside X.
inline std::vector<double> violation_stats(const std::vector<TrajectoryRecord>& ensemble,
                                           const Polytope& x_set) {
  require(!ensemble.empty(), ErrorKind::kConfig, "violation_stats: empty ensemble");
  std::size_t len = 0;
  for (const auto& r : ensemble) len = std::max(len, r.states.size());
  std::vector<double> freq(len, 0.0);
  std::vector<int> count(len, 0);
  for (const auto& r : ensemble) {
    for (std::size_t k = 0; k < r.states.size(); ++k) {
      ++count[k];
      if (!x_set.contains(r.states[k])) freq[k] += 1.0;
    }
  }
  for (std::size_t k = 0; k < len; ++k) freq[k] /= std::max(1, count[k]);
  return freq;
}

struct OneStepViolation {
  long pairs = 0;       // steps where the MPC branch was applied
  long violations = 0;  // ... followed by x_{k+1} outside X
  double frequency() const { return pairs > 0 ? static_cast<double>(violations) / pairs : 0.0; }
};

inline OneStepViolation one_step_violation(const std::vector<TrajectoryRecord>& ensemble,
                                           const Polytope& x_set) {
  OneStepViolation out;
  for (const auto& r : ensemble) {
    for (int k = 0; k < r.steps(); ++k) {
      if (r.branches[static_cast<std::size_t>(k)] != Branch::kMpc) continue;
      ++out.pairs;
      if (!x_set.contains(r.states[static_cast<std::size_t>(k) + 1])) ++out.violations;
    }
  }
  return out;
}

}  // namespace smpc
