#pragma once

// Experiment configuration: one JSON document with blocks system, noise,
// constraints, mpc, sim and issp. Unknown keys are rejected at every level;
// missing optional keys take the defaults below.

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smpc/error.hpp"
#include "smpc/linalg.hpp"
#include "smpc/model.hpp"
#include "smpc/mpc.hpp"
#include "smpc/sim.hpp"

namespace smpc {

struct IsspConfig {
  std::optional<Matrix> P;  // Lyapunov matrix; absent: solve A'PA - P = -I
  double gamma_factor = 1.1;
  double eps = 0.1;
  int horizon_M = 200;
  int calibration_runs = 100;
  std::uint64_t calibration_seed = 2;
  double calibration_level = 0.95;
  int sublevel_samples = 720;
};

struct ExperimentConfig {
  LtiSystem sys;
  NoiseModel noise;
  Vector x_lo, x_hi, u_lo, u_hi;
  int horizon = 10;
  Matrix Q, R;
  double delta = 0.15;
  int terminal_facets = 16;
  SimConfig sim;
  IsspConfig issp;

  Polytope x_set() const { return Polytope::box(x_lo, x_hi); }
  Polytope u_set() const { return Polytope::box(u_lo, u_hi); }
  MpcOptions mpc_options() const {
    MpcOptions o;
    o.horizon = horizon;
    o.delta = delta;
    o.terminal_facets = terminal_facets;
    return o;
  }
  /// P from the config, else the solution of A'PA - P = -I.
  Matrix lyapunov_P() const;
  void validate() const;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& j, const std::string& where,
                           std::initializer_list<const char*> allowed) {
  require(j.is_object(), ErrorKind::kConfig, where + " must be an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it) {
    require(ok.count(it.key()) == 1, ErrorKind::kConfig,
            "unknown key '" + it.key() + "' in " + where);
  }
}

inline const json& need(const json& j, const char* key, const std::string& where) {
  require(j.contains(key), ErrorKind::kConfig, std::string("missing key '") + key + "' in " + where);
  return j.at(key);
}

inline double to_double(const json& j, const std::string& what) {
  require(j.is_number(), ErrorKind::kConfig, what + " must be a number");
  const double v = j.get<double>();
  require(std::isfinite(v), ErrorKind::kConfig, what + " must be finite");
  return v;
}

inline int to_int(const json& j, const std::string& what) {
  require(j.is_number_integer(), ErrorKind::kConfig, what + " must be an integer");
  return j.get<int>();
}

inline std::uint64_t to_u64(const json& j, const std::string& what) {
  require(j.is_number_unsigned() || (j.is_number_integer() && j.get<std::int64_t>() >= 0),
          ErrorKind::kConfig, what + " must be a non-negative integer");
  return j.get<std::uint64_t>();
}

inline Vector to_vector(const json& j, const std::string& what) {
  require(j.is_array() && !j.empty(), ErrorKind::kConfig, what + " must be a non-empty array");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v(static_cast<Eigen::Index>(i)) = to_double(j[i], what);
  }
  return v;
}

inline Matrix to_matrix(const json& j, const std::string& what) {
  require(j.is_array() && !j.empty(), ErrorKind::kConfig, what + " must be a non-empty array of rows");
  const std::size_t rows = j.size();
  require(j[0].is_array() && !j[0].empty(), ErrorKind::kConfig, what + " rows must be arrays");
  const std::size_t cols = j[0].size();
  Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < rows; ++r) {
    require(j[r].is_array() && j[r].size() == cols, ErrorKind::kConfig,
            what + " rows must all have the same length");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = to_double(j[r][c], what);
    }
  }
  return m;
}

inline json from_vector(const Vector& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline json from_matrix(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) out.push_back(from_vector(m.row(r).transpose()));
  return out;
}

}  // namespace detail

inline Matrix ExperimentConfig::lyapunov_P() const {
  if (issp.P) return *issp.P;
  const Matrix p = solve_dlyap(sys.A, Matrix::Identity(sys.n_x(), sys.n_x()));
  return 0.5 * (p + p.transpose());
}

inline void ExperimentConfig::validate() const {
  sys.validate();
  noise.validate();
  const Eigen::Index nx = sys.n_x();
  const Eigen::Index nu = sys.n_u();
  require(noise.sigma_w.rows() == nx, ErrorKind::kConfig, "noise.sigma_w must be n_x by n_x");
  require(x_lo.size() == nx && x_hi.size() == nx, ErrorKind::kConfig,
          "state bounds must have n_x entries");
  require(u_lo.size() == nu && u_hi.size() == nu, ErrorKind::kConfig,
          "input bounds must have n_u entries");
  x_set().validate();
  u_set().validate();
  require(Q.rows() == nx && Q.cols() == nx, ErrorKind::kConfig, "mpc.Q must be n_x by n_x");
  require(R.rows() == nu && R.cols() == nu, ErrorKind::kConfig, "mpc.R must be n_u by n_u");
  require_symmetric(Q, "mpc.Q");
  require_symmetric(R, "mpc.R");
  require(horizon >= 1, ErrorKind::kConfig, "mpc.horizon must be >= 1");
  require(delta > 0.0 && delta < 1.0, ErrorKind::kConfig, "mpc.delta must lie in (0, 1)");
  require(terminal_facets >= 3, ErrorKind::kConfig, "mpc.terminal_facets must be >= 3");
  sim.validate();
  for (const Vector& x0 : sim.initial_states) {
    require(x0.size() == nx, ErrorKind::kConfig, "sim.initial_states entries must have n_x entries");
  }
  if (issp.P) {
    require(issp.P->rows() == nx && issp.P->cols() == nx, ErrorKind::kConfig,
            "issp.P must be n_x by n_x");
    require_symmetric(*issp.P, "issp.P");
  }
  require(issp.gamma_factor > 1.0, ErrorKind::kConfig, "issp.gamma_factor must exceed 1");
  require(issp.eps >= 0.0 && issp.eps < 1.0, ErrorKind::kConfig, "issp.eps must lie in [0, 1)");
  require(issp.horizon_M >= 0, ErrorKind::kConfig, "issp.horizon_M must be >= 0");
  require(issp.calibration_runs >= 1, ErrorKind::kConfig, "issp.calibration_runs must be >= 1");
  require(issp.calibration_level > 0.0 && issp.calibration_level <= 1.0, ErrorKind::kConfig,
          "issp.calibration_level must lie in (0, 1]");
  require(issp.sublevel_samples >= 8, ErrorKind::kConfig, "issp.sublevel_samples must be >= 8");
}

inline SimMode parse_sim_mode(const std::string& s) {
  if (s == "autonomous") return SimMode::kAutonomous;
  if (s == "mpc" || s == "mpc_combined") return SimMode::kMpcCombined;
  throw Error(ErrorKind::kConfig, "unknown sim mode '" + s + "' (autonomous|mpc)");
}

inline NoiseMode parse_noise_mode(const std::string& s) {
  if (s == "exact_gaussian") return NoiseMode::kExactGaussian;
  if (s == "moment_ambiguity") return NoiseMode::kMomentAmbiguity;
  throw Error(ErrorKind::kConfig, "unknown noise mode '" + s + "'");
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using namespace detail;
  reject_unknown(j, "config", {"system", "noise", "constraints", "mpc", "sim", "issp"});
  ExperimentConfig c;

  const json& s = need(j, "system", "config");
  reject_unknown(s, "system", {"A", "B", "Ts"});
  c.sys.A = to_matrix(need(s, "A", "system"), "system.A");
  c.sys.B = to_matrix(need(s, "B", "system"), "system.B");
  c.sys.Ts = s.contains("Ts") ? to_double(s.at("Ts"), "system.Ts") : 0.0;

  const json& n = need(j, "noise", "config");
  reject_unknown(n, "noise", {"sigma_w", "mode"});
  c.noise.sigma_w = to_matrix(need(n, "sigma_w", "noise"), "noise.sigma_w");
  if (n.contains("mode")) {
    require(n.at("mode").is_string(), ErrorKind::kConfig, "noise.mode must be a string");
    c.noise.mode = parse_noise_mode(n.at("mode").get<std::string>());
  }

  const json& k = need(j, "constraints", "config");
  reject_unknown(k, "constraints", {"state_lower", "state_upper", "input_lower", "input_upper"});
  c.x_lo = to_vector(need(k, "state_lower", "constraints"), "constraints.state_lower");
  c.x_hi = to_vector(need(k, "state_upper", "constraints"), "constraints.state_upper");
  c.u_lo = to_vector(need(k, "input_lower", "constraints"), "constraints.input_lower");
  c.u_hi = to_vector(need(k, "input_upper", "constraints"), "constraints.input_upper");

  const json& m = need(j, "mpc", "config");
  reject_unknown(m, "mpc", {"horizon", "Q", "R", "delta", "terminal_facets"});
  c.Q = to_matrix(need(m, "Q", "mpc"), "mpc.Q");
  c.R = to_matrix(need(m, "R", "mpc"), "mpc.R");
  if (m.contains("horizon")) c.horizon = to_int(m.at("horizon"), "mpc.horizon");
  if (m.contains("delta")) c.delta = to_double(m.at("delta"), "mpc.delta");
  if (m.contains("terminal_facets")) c.terminal_facets = to_int(m.at("terminal_facets"), "mpc.terminal_facets");

  if (j.contains("sim")) {
    const json& sm = j.at("sim");
    reject_unknown(sm, "sim", {"mode", "n_runs", "steps", "master_seed", "initial_states"});
    if (sm.contains("mode")) {
      require(sm.at("mode").is_string(), ErrorKind::kConfig, "sim.mode must be a string");
      c.sim.mode = parse_sim_mode(sm.at("mode").get<std::string>());
    }
    if (sm.contains("n_runs")) c.sim.n_runs = to_int(sm.at("n_runs"), "sim.n_runs");
    if (sm.contains("steps")) c.sim.steps = to_int(sm.at("steps"), "sim.steps");
    if (sm.contains("master_seed")) c.sim.master_seed = to_u64(sm.at("master_seed"), "sim.master_seed");
    if (sm.contains("initial_states")) {
      const json& xs = sm.at("initial_states");
      require(xs.is_array() && !xs.empty(), ErrorKind::kConfig,
              "sim.initial_states must be a non-empty array of states");
      for (const json& x : xs) c.sim.initial_states.push_back(to_vector(x, "sim.initial_states"));
    }
  }
  if (c.sim.initial_states.empty()) c.sim.initial_states.push_back(Vector::Zero(c.sys.A.rows()));

  if (j.contains("issp")) {
    const json& is = j.at("issp");
    reject_unknown(is, "issp", {"P", "gamma_factor", "eps", "horizon_M", "calibration_runs",
                                "calibration_seed", "calibration_level", "sublevel_samples"});
    if (is.contains("P")) c.issp.P = to_matrix(is.at("P"), "issp.P");
    if (is.contains("gamma_factor")) c.issp.gamma_factor = to_double(is.at("gamma_factor"), "issp.gamma_factor");
    if (is.contains("eps")) c.issp.eps = to_double(is.at("eps"), "issp.eps");
    if (is.contains("horizon_M")) c.issp.horizon_M = to_int(is.at("horizon_M"), "issp.horizon_M");
    if (is.contains("calibration_runs")) c.issp.calibration_runs = to_int(is.at("calibration_runs"), "issp.calibration_runs");
    if (is.contains("calibration_seed")) c.issp.calibration_seed = to_u64(is.at("calibration_seed"), "issp.calibration_seed");
    if (is.contains("calibration_level")) c.issp.calibration_level = to_double(is.at("calibration_level"), "issp.calibration_level");
    if (is.contains("sublevel_samples")) c.issp.sublevel_samples = to_int(is.at("sublevel_samples"), "issp.sublevel_samples");
  }
  c.validate();
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kConfig, "cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Normalized document: every field explicit, keys sorted.
inline nlohmann::json to_json(const ExperimentConfig& c) {
  using detail::from_matrix;
  using detail::from_vector;
  nlohmann::json j;
  j["system"] = {{"A", from_matrix(c.sys.A)}, {"B", from_matrix(c.sys.B)}, {"Ts", c.sys.Ts}};
  j["noise"] = {{"sigma_w", from_matrix(c.noise.sigma_w)}, {"mode", to_string(c.noise.mode)}};
  j["constraints"] = {{"state_lower", from_vector(c.x_lo)}, {"state_upper", from_vector(c.x_hi)},
                      {"input_lower", from_vector(c.u_lo)}, {"input_upper", from_vector(c.u_hi)}};
  j["mpc"] = {{"horizon", c.horizon}, {"Q", from_matrix(c.Q)}, {"R", from_matrix(c.R)},
              {"delta", c.delta}, {"terminal_facets", c.terminal_facets}};
  nlohmann::json states = nlohmann::json::array();
  for (const Vector& x : c.sim.initial_states) states.push_back(from_vector(x));
  j["sim"] = {{"mode", to_string(c.sim.mode)}, {"n_runs", c.sim.n_runs}, {"steps", c.sim.steps},
              {"master_seed", c.sim.master_seed}, {"initial_states", states}};
  nlohmann::json is = {{"gamma_factor", c.issp.gamma_factor},
                       {"eps", c.issp.eps},
                       {"horizon_M", c.issp.horizon_M},
                       {"calibration_runs", c.issp.calibration_runs},
                       {"calibration_seed", c.issp.calibration_seed},
                       {"calibration_level", c.issp.calibration_level},
                       {"sublevel_samples", c.issp.sublevel_samples}};
  if (c.issp.P) is["P"] = from_matrix(*c.issp.P);
  j["issp"] = is;
  return j;
}

inline std::string serialize_config(const ExperimentConfig& c) { return to_json(c).dump(2) + "\n"; }

/// FNV-1a (64 bit) of the compact normalized document, as 16 hex digits.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  static const char* hex = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = hex[h & 0xFU];
    h >>= 4;
  }
  return out;
}

/// The numeric example: system, noise, constraints, weights and delta as
/// published; horizon 100 (the shortest round number from which x0 = [10, 0]
/// is feasible); Lyapunov matrix P as published.
inline ExperimentConfig paper_config() {
  ExperimentConfig c;
  c.sys.A.resize(2, 2);
  c.sys.A << 0.924, -0.100, 0.050, 1.000;
  c.sys.B.resize(2, 1);
  c.sys.B << 0.025, 0.000;
  c.sys.Ts = 0.05;
  c.noise.sigma_w.resize(2, 2);
  c.noise.sigma_w << 0.0050, 0.0, 0.0, 0.0075;
  c.noise.mode = NoiseMode::kExactGaussian;
  c.x_lo.resize(2);
  c.x_lo << -1.0, -2.0;
  c.x_hi.resize(2);
  c.x_hi << 12.0, 4.0;
  c.u_lo = Vector::Constant(1, -37.0);
  c.u_hi = Vector::Constant(1, 37.0);
  c.horizon = 100;
  c.Q.resize(2, 2);
  c.Q << 2.0, 0.0, 0.0, 0.1;
  c.R = Matrix::Identity(1, 1);
  c.delta = 0.15;
  c.terminal_facets = 16;
  c.sim.mode = SimMode::kAutonomous;
  c.sim.n_runs = 100;
  c.sim.steps = 200;
  c.sim.master_seed = 1;
  Vector x0(2);
  x0 << 10.0, 0.0;
  c.sim.initial_states = {x0};
  Matrix p(2, 2);
  p << 1.093, 0.554, 0.554, 2.915;
  c.issp.P = p;
  c.validate();
  return c;
}

inline MpcProblemData assemble(const ExperimentConfig& c) {
  return assemble(c.sys, c.noise, c.x_set(), c.u_set(), c.Q, c.R, c.mpc_options());
}

}  // namespace smpc
