#pragma once

// Orchestration behind the command-line tool: synthesis and certification
// reports as flat key=value documents, and the simulation outputs
// (trajectories.csv, lyapunov.csv, summary.csv, manifest.json).

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "smpc/config.hpp"
#include "smpc/issp.hpp"
#include "smpc/mpc.hpp"
#include "smpc/sim.hpp"
#include "smpc/tightening.hpp"

namespace smpc {

/// Shortest round-trip decimal, '.' separator, independent of locale.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Ordered key=value document.
class Report {
 public:
  void add(const std::string& key, const std::string& value) { items_.emplace_back(key, value); }
  void add(const std::string& key, double value) { add(key, format_number(value)); }
  void add(const std::string& key, int value) { add(key, std::to_string(value)); }
  void add(const std::string& key, bool value) { add(key, std::string(value ? "true" : "false")); }
  void add(const std::string& key, const char* value) { add(key, std::string(value)); }
  void add_matrix(const std::string& key, const Matrix& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        add(key + "." + std::to_string(r + 1) + std::to_string(c + 1), m(r, c));
      }
    }
  }
  std::string str() const {
    std::string out;
    for (const auto& [k, v] : items_) out += k + "=" + v + "\n";
    return out;
  }
  const std::vector<std::pair<std::string, std::string>>& items() const { return items_; }

 private:
  std::vector<std::pair<std::string, std::string>> items_;
};

struct SynthResult {
  MpcProblemData data;
  Matrix P;
  double kappa = 0.0;
  double rho = 0.0;
  double gamma_min = 0.0;
  Report report;
};

/// Lyapunov matrix for the autonomous system: the configured P, else the
/// solution of A'PA - P = -I. For an unstable A no such P exists; the
/// identity is returned so that the stability check reports the failure.
inline Matrix lyapunov_matrix_or_identity(const ExperimentConfig& c) {
  if (c.issp.P) return *c.issp.P;
  if (spectral_radius(c.sys.A) >= 1.0) return Matrix::Identity(c.sys.n_x(), c.sys.n_x());
  return c.lyapunov_P();
}

/// Throws Error(kSynthesis) when an ingredient cannot be built.
inline SynthResult synthesize(const ExperimentConfig& c) {
  SynthResult s;
  s.data = assemble(c);
  const MpcProblemData& d = s.data;
  Report& r = s.report;
  r.add("horizon", c.horizon);
  r.add("noise_mode", to_string(c.noise.mode));
  r.add_matrix("Qf", d.terminal.Qf);
  r.add_matrix("Kf", d.terminal.Kf);
  r.add("alpha", d.terminal.alpha);
  r.add("terminal_facets", static_cast<int>(d.terminal_polytope.polytope.n_constraints()));
  r.add("psi", d.tightened.psi);
  r.add("delta", d.tightened.delta);
  for (std::size_t i = 0; i < d.tightened.sets.size(); ++i) {
    const Vector& h = d.tightened.sets[i].h;
    for (Eigen::Index j = 0; j < h.size(); ++j) {
      r.add("offset." + std::to_string(i) + "." + std::to_string(j + 1), h(j));
    }
  }
  for (Eigen::Index j = 0; j < d.terminal_box.h.size(); ++j) {
    r.add("terminal_box." + std::to_string(j + 1), d.terminal_box.h(j));
  }
  r.add("c", d.uncertainty_cost);

  s.P = lyapunov_matrix_or_identity(c);
  r.add_matrix("P", s.P);
  s.rho = rho_offset(s.P, c.noise.sigma_w);
  r.add("rho", s.rho);
  if (spectral_radius(c.sys.A) < 1.0 && lyapunov_decrease_margin(s.P, c.sys.A) < 0.0 &&
      lambda_min(s.P) > 0.0) {
    s.kappa = kappa_coefficient(s.P, c.sys.A);
    s.gamma_min = s.rho / s.kappa;
    r.add("kappa", s.kappa);
    r.add("gamma_min", s.gamma_min);
  } else {
    r.add("kappa", "undefined");
    r.add("gamma_min", "undefined");
  }
  return s;
}

struct CertifyResult {
  IsspCertificate cert;
  std::string synthesis_error;  // non-empty when MPC synthesis failed
  Report report;
};

inline CertifyResult run_certify(const ExperimentConfig& c) {
  CertifyResult out;
  std::optional<MpcProblemData> data;
  try {
    data = assemble(c);
  } catch (const Error& e) {
    out.synthesis_error = e.what();
  }
  CertifyOptions opts;
  opts.gamma_factor = c.issp.gamma_factor;
  opts.samples = c.issp.sublevel_samples;
  const Matrix p = lyapunov_matrix_or_identity(c);
  out.cert = certify(c.sys, c.noise, p, c.Q, c.horizon, c.x_set(), data ? &*data : nullptr, opts);
  const IsspCertificate& k = out.cert;
  Report& r = out.report;
  r.add_matrix("P", k.P);
  r.add("spectral_radius", k.spectral_radius);
  r.add("decrease_margin", k.decrease_margin);
  r.add("assumption_2", k.assumption_stable ? "pass" : "fail");
  r.add("kappa", k.kappa_coeff);
  r.add("rho", k.rho);
  r.add("gamma_min", k.gamma_min);
  r.add("gamma", k.gamma);
  r.add("mpc_noise_offset", k.mpc_offset);
  r.add("sublevel_samples", k.sublevel_samples);
  r.add("sublevel_in_x0", k.sublevel_in_x0 ? "pass" : "fail");
  r.add("sublevel_note", k.sublevel_note);
  if (k.witness) {
    for (Eigen::Index i = 0; i < k.witness->size(); ++i) {
      r.add("witness." + std::to_string(i + 1), (*k.witness)(i));
    }
  }
  if (!out.synthesis_error.empty()) r.add("synthesis_error", out.synthesis_error);
  r.add("certified", k.certified());
  return out;
}

struct SimulationResult {
  std::vector<TrajectoryRecord> runs;
  RecurrenceStats recurrence;
  OneStepViolation one_step;
  std::vector<double> violation_frequency;
};

/// Closed-loop ensemble for c.sim. `data` is required in mpc mode; in
/// autonomous mode it enables the X_0 membership column.
inline SimulationResult simulate(const ExperimentConfig& c, const MpcProblemData* data,
                                 int threads) {
  SimContext ctx;
  ctx.sys = c.sys;
  ctx.noise_factor = noise_factor(c.noise.sigma_w);
  ctx.mpc = data;
  ctx.x_set = c.x_set();
  ctx.lyapunov_P = lyapunov_matrix_or_identity(c);
  ctx.record_candidate = c.sim.mode == SimMode::kMpcCombined;
  ctx.record_feasibility = true;
  SimulationResult out;
  out.runs = monte_carlo(c.sim, ctx, threads);
  out.recurrence = recurrence_stats(out.runs);
  out.one_step = one_step_violation(out.runs, ctx.x_set);
  out.violation_frequency = violation_stats(out.runs, ctx.x_set);
  return out;
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  require(f.good(), ErrorKind::kIo, "cannot open '" + path.string() + "' for writing");
  f << text;
  require(f.good(), ErrorKind::kIo, "write to '" + path.string() + "' failed");
}

inline const char* membership_code(Membership m) {
  switch (m) {
    case Membership::kInside: return "1";
    case Membership::kOutside: return "0";
    case Membership::kIndeterminate: return "?";
  }
  return "?";
}

}  // namespace detail

inline std::string trajectories_csv(const SimulationResult& s, Eigen::Index nx, Eigen::Index nu) {
  std::string out = "run_id,k";
  for (Eigen::Index i = 0; i < nx; ++i) out += ",x" + std::to_string(i + 1);
  for (Eigen::Index i = 0; i < nu; ++i) out += ",u" + std::to_string(i + 1);
  out += ",branch,feasible,violated\n";
  for (const TrajectoryRecord& t : s.runs) {
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      out += std::to_string(t.run_id) + "," + std::to_string(k);
      for (Eigen::Index i = 0; i < nx; ++i) out += "," + format_number(t.states[k](i));
      for (Eigen::Index i = 0; i < nu; ++i) {
        out += ",";
        if (k < t.inputs.size()) out += format_number(t.inputs[k](i));
      }
      out += ",";
      out += to_string(t.branches[k]);
      out += ",";
      out += detail::membership_code(t.feasible[k]);
      out += t.violated[k] ? ",1\n" : ",0\n";
    }
  }
  return out;
}

inline std::string lyapunov_csv(const SimulationResult& s) {
  std::string out = "run_id,k,V,candidate_V\n";
  for (const TrajectoryRecord& t : s.runs) {
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      out += std::to_string(t.run_id) + "," + std::to_string(k) + "," +
             format_number(t.lyapunov_V[k]) + "," + format_number(t.candidate_V[k]) + "\n";
    }
  }
  return out;
}

/// Per step k: violation frequency, fraction of runs on the MPC branch,
/// fraction outside X_0, and the number of excursions whose hitting time is k.
inline std::string summary_csv(const SimulationResult& s) {
  std::string out = "k,violation_frequency,mpc_fraction,outside_x0_fraction,returns_with_hitting_time_k\n";
  const std::size_t len = s.violation_frequency.size();
  for (std::size_t k = 0; k < len; ++k) {
    int runs = 0;
    int mpc = 0;
    int outside = 0;
    for (const TrajectoryRecord& t : s.runs) {
      if (k >= t.states.size()) continue;
      ++runs;
      if (t.branches[k] == Branch::kMpc) ++mpc;
      if (t.feasible[k] != Membership::kInside) ++outside;
    }
    const auto it = s.recurrence.hitting_times.find(static_cast<int>(k));
    const int hits = it == s.recurrence.hitting_times.end() ? 0 : it->second;
    const double denom = std::max(1, runs);
    out += std::to_string(k) + "," + format_number(s.violation_frequency[k]) + "," +
           format_number(mpc / denom) + "," + format_number(outside / denom) + "," +
           std::to_string(hits) + "\n";
  }
  return out;
}

inline nlohmann::json manifest_json(const ExperimentConfig& c, const SimulationResult& s) {
  nlohmann::json j;
  j["config_hash"] = config_hash(c);
  j["master_seed"] = c.sim.master_seed;
  j["mode"] = to_string(c.sim.mode);
  j["n_runs"] = c.sim.n_runs;
  j["steps"] = c.sim.steps;
  j["files"] = {"trajectories.csv", "lyapunov.csv", "summary.csv"};
  j["excursions"] = s.recurrence.excursions;
  j["unreturned_excursions"] = s.recurrence.unreturned;
  j["max_hitting_time"] = s.recurrence.max_hitting_time;
  j["mpc_steps"] = s.one_step.pairs;
  j["one_step_violations"] = s.one_step.violations;
  j["config"] = to_json(c);
  return j;
}

/// All writes happen here, after the ensemble is complete.
inline void write_simulation(const std::filesystem::path& dir, const ExperimentConfig& c,
                             const SimulationResult& s) {
  std::filesystem::create_directories(dir);
  detail::write_file(dir / "trajectories.csv", trajectories_csv(s, c.sys.n_x(), c.sys.n_u()));
  detail::write_file(dir / "lyapunov.csv", lyapunov_csv(s));
  detail::write_file(dir / "summary.csv", summary_csv(s));
  detail::write_file(dir / "manifest.json", manifest_json(c, s).dump(2) + "\n");
}

}  // namespace smpc
