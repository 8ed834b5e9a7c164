// smpc: synthesis, certification and closed-loop simulation of the
// stochastic MPC scheme.
//
//   smpc synth --config cfg.json
//   smpc certify --config cfg.json
//   smpc simulate --config cfg.json --mode mpc --out out/
//   smpc reproduce-paper --out repro/
//
// Exit codes: 0 success, 1 I/O error, 2 config error, 3 synthesis failure,
// 4 certification failure, 5 acceptance failure.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "smpc/config.hpp"
#include "smpc/experiment.hpp"

namespace {

using namespace smpc;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitConfig = 2;
constexpr int kExitSynthesis = 3;
constexpr int kExitCertification = 4;
constexpr int kExitAcceptance = 5;

struct Overrides {
  std::string config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::optional<int> runs;
  std::optional<int> steps;
  std::string out;
};

// Any failure while reading or validating the config is a config error.
ExperimentConfig load(const Overrides& o, bool embedded_paper) try {
  ExperimentConfig c = embedded_paper || o.config.empty() ? paper_config() : load_config(o.config);
  if (!o.mode.empty()) c.sim.mode = parse_sim_mode(o.mode);
  if (o.seed) c.sim.master_seed = *o.seed;
  if (o.runs) c.sim.n_runs = *o.runs;
  if (o.steps) c.sim.steps = *o.steps;
  c.validate();
  return c;
} catch (const Error& e) {
  throw Error(ErrorKind::kConfig, e.what());
}

void emit(const Report& r, const Overrides& o, const std::string& file) {
  std::cout << r.str();
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    detail::write_file(fs::path(o.out) / file, r.str());
  }
}

int cmd_synth(const Overrides& o) {
  const ExperimentConfig c = load(o, false);
  emit(synthesize(c).report, o, "synth.txt");
  return kExitOk;
}

int cmd_certify(const Overrides& o) {
  const ExperimentConfig c = load(o, false);
  const CertifyResult r = run_certify(c);
  emit(r.report, o, "certify.txt");
  return r.cert.certified() ? kExitOk : kExitCertification;
}

int cmd_simulate(const Overrides& o) {
  const ExperimentConfig c = load(o, false);
  std::optional<MpcProblemData> data;
  try {
    data = assemble(c);
  } catch (const Error& e) {
    if (c.sim.mode == SimMode::kMpcCombined) throw;
    std::cerr << "note: MPC synthesis failed (" << e.what() << "); feasible column is '?'\n";
  }
  const SimulationResult s = simulate(c, data ? &*data : nullptr, thread_count_from_env());
  const fs::path dir = o.out.empty() ? fs::path("out") : fs::path(o.out);
  write_simulation(dir, c, s);
  std::cout << "wrote " << c.sim.n_runs << " runs x " << (c.sim.steps + 1) << " rows to "
            << dir.string() << "\n";
  return kExitOk;
}

struct Check {
  std::string name;
  bool pass;
  std::string expected;
  std::string actual;
};

int cmd_reproduce(const Overrides& o) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = load(o, true);
  const fs::path dir = o.out.empty() ? fs::path("reproduce") : fs::path(o.out);
  fs::create_directories(dir);
  const int threads = thread_count_from_env();

  SynthResult syn = synthesize(c);
  detail::write_file(dir / "synth.txt", syn.report.str());
  const CertifyResult cer = run_certify(c);
  detail::write_file(dir / "certify.txt", cer.report.str());

  ExperimentConfig auto_cfg = c;
  auto_cfg.sim.mode = SimMode::kAutonomous;
  const SimulationResult autonomous = simulate(auto_cfg, &syn.data, threads);
  write_simulation(dir / "autonomous", auto_cfg, autonomous);
  ExperimentConfig mpc_cfg = c;
  mpc_cfg.sim.mode = SimMode::kMpcCombined;
  const SimulationResult closed = simulate(mpc_cfg, &syn.data, threads);
  write_simulation(dir / "mpc", mpc_cfg, closed);

  std::vector<Check> checks;
  {
    Matrix paper_qf(2, 2);
    paper_qf << 14.250, 1.213, 1.213, 28.339;
    const double err = max_abs(syn.data.terminal.Qf - paper_qf);
    checks.push_back({"qf", err <= 5e-3, "max |Qf - published| <= 0.005",
                      "max |Qf - published| = " + format_number(err)});
  }
  checks.push_back({"psi", std::abs(syn.data.tightened.psi - 1.7805) <= 1e-3, "1.7805 +- 1e-3",
                    format_number(syn.data.tightened.psi)});
  checks.push_back({"lyapunov_p", cer.cert.decrease_margin < 0.0, "lambda_max(A'PA - P) < 0",
                    format_number(cer.cert.decrease_margin)});
  checks.push_back({"rho", std::abs(syn.rho - 0.0273275) <= 5e-8, "0.0273275",
                    format_number(syn.rho)});
  checks.push_back({"certify", cer.cert.certified(), "certified", cer.cert.sublevel_note});
  {
    const OneStepViolation& v = closed.one_step;
    const double f = v.frequency();
    const double se = std::sqrt(0.15 * 0.85 / std::max<long>(1, v.pairs));
    const double bound = 0.15 + 3.0 * se;
    checks.push_back({"one_step_violation", v.pairs > 0 && f <= bound,
                      "<= " + format_number(bound),
                      format_number(f) + " over " + std::to_string(v.pairs) + " MPC steps"});
  }
  checks.push_back({"recurrence", closed.recurrence.unreturned == 0, "0 unreturned excursions",
                    std::to_string(closed.recurrence.unreturned) + " of " +
                        std::to_string(closed.recurrence.excursions)});

  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::string summary;
  bool all = true;
  for (const Check& k : checks) {
    all = all && k.pass;
    summary += std::string(k.pass ? "PASS " : "FAIL ") + k.name + ": expected " + k.expected +
               ", actual " + k.actual + "\n";
  }
  summary += "elapsed_seconds=" + format_number(std::round(secs * 10.0) / 10.0) + "\n";
  detail::write_file(dir / "acceptance_summary.txt", summary);
  std::cout << summary;
  return all ? kExitOk : kExitAcceptance;
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::kConfig:
    case ErrorKind::kDimension: return kExitConfig;
    case ErrorKind::kSynthesis:
    case ErrorKind::kNumeric: return kExitSynthesis;
    case ErrorKind::kCertification: return kExitCertification;
    case ErrorKind::kIo: return kExitIo;
  }
  return kExitIo;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stochastic MPC: synthesis, certification and closed-loop simulation"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    if (needs_config) {
      sub->add_option("--config", o.config, "Experiment configuration (JSON)")
          ->required()
          ->check(CLI::ExistingFile);
    }
    sub->add_option("--mode", o.mode, "Simulation mode")
        ->check(CLI::IsMember({"autonomous", "mpc"}));
    sub->add_option("--seed", o.seed, "Master seed");
    sub->add_option("--runs", o.runs, "Number of runs")->check(CLI::PositiveNumber);
    sub->add_option("--steps", o.steps, "Steps per run")->check(CLI::PositiveNumber);
    sub->add_option("--out", o.out, "Output directory");
  };
  CLI::App* synth = app.add_subcommand("synth", "Print the MPC and ISSp ingredients");
  CLI::App* cert = app.add_subcommand("certify", "Run the ISSp certification checks");
  CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo closed loop; writes CSVs");
  CLI::App* repro = app.add_subcommand("reproduce-paper",
                                       "Run everything on the built-in numeric example");
  add_common(synth, true);
  add_common(cert, true);
  add_common(sim, true);
  add_common(repro, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*synth) return cmd_synth(o);
    if (*cert) return cmd_certify(o);
    if (*sim) return cmd_simulate(o);
    if (*repro) return cmd_reproduce(o);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitConfig;
}
