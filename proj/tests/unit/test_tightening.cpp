#include <gtest/gtest.h>

#include <cmath>

#include "smpc/config.hpp"
#include "smpc/mpc.hpp"
#include "smpc/tightening.hpp"

namespace {

using smpc::Matrix;
using smpc::NoiseMode;
using smpc::Vector;

// Standard normal CDF from the complementary error function.
double phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Quantile by bisection on phi; independent of the library's rational start.
double quantile_by_bisection(double p) {
  double lo = -40.0;
  double hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (phi(mid) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

smpc::Polytope paper_box() {
  const smpc::ExperimentConfig c = smpc::paper_config();
  return c.x_set();
}

TEST(TighteningFactor, GaussianPaperValue) {
  const double psi = smpc::tightening_factor(NoiseMode::kExactGaussian, 0.15, 4);
  EXPECT_NEAR(psi, 1.7805, 1e-3);
  EXPECT_NEAR(phi(psi), 0.9625, 1e-10);
  EXPECT_NEAR(psi, quantile_by_bisection(0.9625), 1e-12);
}

TEST(TighteningFactor, AmbiguityPaperValue) {
  const double psi = smpc::tightening_factor(NoiseMode::kMomentAmbiguity, 0.15, 4);
  EXPECT_NEAR(psi, std::sqrt(3.85 / 0.15), 1e-14);
  EXPECT_NEAR(psi, 5.0663, 1e-4);
}

TEST(TighteningFactor, MedianGivesZero) {
  EXPECT_NEAR(smpc::tightening_factor(NoiseMode::kExactGaussian, 0.5, 1), 0.0, 1e-15);
  EXPECT_NEAR(smpc::tightening_factor(NoiseMode::kExactGaussian, 0.4, 1), quantile_by_bisection(0.6),
              1e-12);
}

TEST(TighteningFactor, RejectsBadDelta) {
  EXPECT_THROW(smpc::tightening_factor(NoiseMode::kExactGaussian, 0.0, 4), smpc::Error);
  EXPECT_THROW(smpc::tightening_factor(NoiseMode::kExactGaussian, 1.0, 4), smpc::Error);
  EXPECT_THROW(smpc::tightening_factor(NoiseMode::kExactGaussian, 0.15, 0), smpc::Error);
}

TEST(InverseNormalCdf, KnownQuantilesAndSymmetry) {
  EXPECT_NEAR(smpc::inverse_normal_cdf(0.5), 0.0, 1e-15);
  EXPECT_NEAR(smpc::inverse_normal_cdf(0.975), 1.959964, 1e-6);
  for (double p : {1e-12, 1e-6, 0.001, 0.02, 0.3, 0.49}) {
    const double z = smpc::inverse_normal_cdf(p);
    EXPECT_NEAR(z, quantile_by_bisection(p), 1e-9 * (1.0 + std::abs(z))) << "p=" << p;
  }
  // Dyadic p keeps 1 - p exact.
  for (double p : {0x1p-40, 0x1p-20, 0x1p-10, 0.25, 0.375}) {
    const double z = smpc::inverse_normal_cdf(p);
    EXPECT_NEAR(smpc::inverse_normal_cdf(1.0 - p), -z, 1e-10 * (1.0 + std::abs(z))) << "p=" << p;
  }
}

TEST(Tighten, ZeroCovarianceOrZeroPsiIsIdentity) {
  const smpc::Polytope x = paper_box();
  EXPECT_EQ((smpc::tighten(x, Matrix::Zero(2, 2), 1.78).h - x.h).cwiseAbs().maxCoeff(), 0.0);
  Matrix s(2, 2);
  s << 0.005, 0.0, 0.0, 0.0075;
  EXPECT_EQ((smpc::tighten(x, s, 0.0).h - x.h).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Tighten, PaperFirstStepOffset) {
  const smpc::Polytope x = paper_box();
  Matrix s(2, 2);
  s << 0.005, 0.0, 0.0, 0.0075;
  const double psi = smpc::tightening_factor(NoiseMode::kExactGaussian, 0.15, 4);
  const smpc::Polytope z = smpc::tighten(x, s, psi);
  EXPECT_NEAR(z.h(0), 12.0 - psi * std::sqrt(0.005), 1e-14);
  EXPECT_NEAR(z.h(0), 11.8741, 1e-4);
  EXPECT_NEAR(z.h(3), 2.0 - psi * std::sqrt(0.0075), 1e-14);
}

TEST(TightenedSequence, OffsetsNonincreasing) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const auto cov = smpc::propagate_covariance(c.sys, c.noise, 100);
  const smpc::TightenedSequence seq =
      smpc::build_tightened_sequence(c.x_set(), cov, 0.15, NoiseMode::kExactGaussian);
  ASSERT_EQ(seq.sets.size(), 100u);
  EXPECT_EQ((seq.sets[0].h - c.x_set().h).cwiseAbs().maxCoeff(), 0.0);
  for (std::size_t i = 1; i < seq.sets.size(); ++i) {
    EXPECT_LE((seq.sets[i].h - seq.sets[i - 1].h).maxCoeff(), 1e-15) << "i=" << i;
  }
}

TEST(TightenedSequence, HorizonOneIsUntightened) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const auto cov = smpc::propagate_covariance(c.sys, c.noise, 1);
  const auto seq = smpc::build_tightened_sequence(c.x_set(), cov, 0.15, NoiseMode::kExactGaussian);
  ASSERT_EQ(seq.sets.size(), 1u);
  EXPECT_EQ((seq.sets[0].h - c.x_set().h).cwiseAbs().maxCoeff(), 0.0);
}

TEST(TightenedSequence, OriginExcludedIsSynthesisError) {
  smpc::ExperimentConfig c = smpc::paper_config();
  c.noise.sigma_w *= 1e4;
  const auto cov = smpc::propagate_covariance(c.sys, c.noise, 5);
  try {
    smpc::build_tightened_sequence(c.x_set(), cov, 0.15, NoiseMode::kExactGaussian);
    FAIL() << "expected an error";
  } catch (const smpc::Error& e) {
    EXPECT_EQ(e.kind(), smpc::ErrorKind::kSynthesis);
  }
}

smpc::Polytope half_space(double a, double b, double c) {
  smpc::Polytope p;
  p.H.resize(1, 2);
  p.H << a, b;
  p.h.resize(1);
  p.h << c;
  return p;
}

smpc::Polytope no_inputs() { return smpc::Polytope{Matrix(0, 1), Vector(0)}; }

TEST(TerminalLevel, UnitBallTouchesPlane) {
  EXPECT_NEAR(smpc::terminal_level(Matrix::Identity(2, 2), Matrix::Zero(1, 2),
                                   half_space(1, 0, 1), no_inputs()),
              1.0, 1e-15);
}

TEST(TerminalLevel, SupportFunctionFormula) {
  Matrix qf(2, 2);
  qf << 4.0, 0.0, 0.0, 1.0;
  // alpha = c^2 / (g' Qf^{-1} g) = 1 / (1/4)
  EXPECT_NEAR(smpc::terminal_level(qf, Matrix::Zero(1, 2), half_space(1, 0, 1), no_inputs()), 4.0,
              1e-14);
}

TEST(TerminalLevel, EmptySetThrows) {
  EXPECT_THROW(smpc::terminal_level(Matrix::Identity(2, 2), Matrix::Zero(1, 2),
                                    half_space(1, 0, 0), no_inputs()),
               smpc::Error);
}

TEST(TerminalLevel, PaperEllipsoidInsideTightenedBox) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const smpc::MpcProblemData d = smpc::assemble(c);
  ASSERT_GT(d.terminal.alpha, 0.0);
  int on_boundary = 0;
  for (const Vector& z : smpc::ellipsoid_boundary_samples(d.terminal.Qf, d.terminal.alpha, 360)) {
    EXPECT_NEAR(z.dot(d.terminal.Qf * z), d.terminal.alpha, 1e-10 * d.terminal.alpha);
    EXPECT_TRUE(d.terminal_box.contains(z, 1e-9));
    EXPECT_TRUE(c.u_set().contains(-d.terminal.Kf * z, 1e-9));
    if ((d.terminal_box.H * z - d.terminal_box.h).maxCoeff() > -1e-3) ++on_boundary;
  }
  EXPECT_GT(on_boundary, 0) << "alpha should be the largest admissible level";
}

TEST(ValidateTerminal, DareIngredientsPass) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const smpc::MpcProblemData d = smpc::assemble(c);
  const smpc::TerminalReport r = smpc::validate_terminal(d.terminal, c.sys, c.Q, c.R, c.u_set());
  EXPECT_TRUE(r.all());
  EXPECT_LE(std::abs(r.decrease_residual), 1e-8);

  smpc::TerminalIngredients half = d.terminal;
  half.alpha *= 0.5;
  EXPECT_TRUE(smpc::validate_terminal(half, c.sys, c.Q, c.R, c.u_set()).all());
}

TEST(ValidateTerminal, ZeroGainWithLyapunovCost) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  smpc::TerminalIngredients t;
  t.Qf = smpc::solve_dlyap(c.sys.A, c.Q);
  t.Kf = Matrix::Zero(1, 2);
  t.alpha = 1.0;
  const smpc::TerminalReport r = smpc::validate_terminal(t, c.sys, c.Q, c.R, c.u_set());
  EXPECT_LE(std::abs(r.decrease_residual), 1e-9);
  EXPECT_TRUE(r.all());
}

TEST(ValidateTerminal, InflatedLevelFailsInputCheck) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const smpc::MpcProblemData d = smpc::assemble(c);
  smpc::TerminalIngredients t = d.terminal;
  t.alpha *= 1e6;  // |Kf z| reaches about 100 > 37
  EXPECT_FALSE(smpc::validate_terminal(t, c.sys, c.Q, c.R, c.u_set()).input_admissible);
}

TEST(EmpiricalPrs, HugePsiCoversEverything) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  EXPECT_EQ(smpc::empirical_prs_check(c.noise, c.sys, 1, 10.0, c.x_set(), 20000, 1), 1.0);
}

TEST(EmpiricalPrs, GaussianTighteningHoldsAndAmbiguityIsMoreConservative) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const int trials = 40000;
  const double psi_g = smpc::tightening_factor(NoiseMode::kExactGaussian, 0.15, 4);
  const double psi_a = smpc::tightening_factor(NoiseMode::kMomentAmbiguity, 0.15, 4);
  for (int i : {1, 5, 30}) {
    const double fg = smpc::empirical_prs_check(c.noise, c.sys, i, psi_g, c.x_set(), trials, 9);
    const double fa = smpc::empirical_prs_check(c.noise, c.sys, i, psi_a, c.x_set(), trials, 9);
    const double se = std::sqrt(0.15 * 0.85 / trials);
    EXPECT_GE(fg, 0.85 - 3.0 * se) << "i=" << i;
    EXPECT_GE(fa, fg) << "i=" << i;
  }
}

}  // namespace
