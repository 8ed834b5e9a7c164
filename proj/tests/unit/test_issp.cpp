#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "smpc/config.hpp"
#include "smpc/issp.hpp"

namespace {

using smpc::Matrix;
using smpc::Membership;
using smpc::Vector;

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

Matrix paper_p() {
  Matrix p(2, 2);
  p << 1.093, 0.554, 0.554, 2.915;
  return p;
}

TEST(Lyapunov, PaperPSatisfiesAssumption) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const Matrix m = c.sys.A.transpose() * paper_p() * c.sys.A - paper_p();
  // Independent eigenvalues of the symmetric 2x2 decrease matrix.
  const auto [lo, hi] = oracle::eig2_sym(m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1));
  EXPECT_LT(hi, 0.0);
  EXPECT_NEAR(smpc::lyapunov_decrease_margin(paper_p(), c.sys.A), hi, 1e-13);
  (void)lo;
}

TEST(Lyapunov, RoundTripThroughDecreaseMatrix) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const Matrix q = paper_p() - c.sys.A.transpose() * paper_p() * c.sys.A;
  EXPECT_LE(smpc::max_abs(smpc::autonomous_lyapunov(c.sys.A, q) - paper_p()), 1e-10);
}

TEST(Lyapunov, UnstableMatrixRejected) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  EXPECT_THROW(smpc::autonomous_lyapunov(1.05 * c.sys.A, Matrix::Identity(2, 2)), smpc::Error);
}

TEST(Kappa, ScalarClosedForm) {
  Matrix a(1, 1), p(1, 1);
  a << 0.5;
  p << 4.0 / 3.0;  // p - a p a = 1
  EXPECT_NEAR(smpc::kappa_coefficient(p, a), 0.75, 1e-15);
}

TEST(Rho, PaperValueAndThresholdIdentity) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const double rho = smpc::rho_offset(paper_p(), c.noise.sigma_w);
  EXPECT_NEAR(rho, 1.093 * 0.005 + 2.915 * 0.0075, 1e-16);
  EXPECT_NEAR(rho, 0.0273275, 1e-12);
  const double kappa = smpc::kappa_coefficient(paper_p(), c.sys.A);
  const double gamma = smpc::gamma_threshold(paper_p(), c.sys.A, c.noise.sigma_w);
  EXPECT_NEAR(gamma * kappa, rho, 1e-15);
  EXPECT_NEAR(smpc::expected_decrease_autonomous(paper_p(), c.sys.A, c.noise.sigma_w,
                                                 Vector::Zero(2)),
              rho, 0.0);
}

TEST(ExpectedDecrease, SignFlipsAtExactLevel) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const Matrix m = paper_p() - c.sys.A.transpose() * paper_p() * c.sys.A;
  const double rho = smpc::rho_offset(paper_p(), c.noise.sigma_w);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  for (int k = 0; k < 200; ++k) {
    Vector x = vec2(g(rng), g(rng));
    const double level = x.dot(m * x);
    for (double s : {0.9, 1.1}) {
      const Vector y = std::sqrt(s * rho / level) * x;
      const double dec = smpc::expected_decrease_autonomous(paper_p(), c.sys.A, c.noise.sigma_w, y);
      if (s > 1.0) EXPECT_LT(dec, 0.0);
      if (s < 1.0) EXPECT_GT(dec, 0.0);
    }
  }
}

TEST(ExpectedDecrease, MonteCarloMatchesExactForm) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const Matrix l = c.noise.sigma_w.llt().matrixL();
  std::mt19937_64 rng(17);
  std::normal_distribution<double> g;
  for (const Vector& x : {vec2(0.0, 0.0), vec2(3.0, -1.0), vec2(-0.5, 2.0)}) {
    const double v0 = x.dot(paper_p() * x);
    const int n = 100000;
    double sum = 0.0;
    double sq = 0.0;
    for (int i = 0; i < n; ++i) {
      const Vector xn = c.sys.A * x + l * vec2(g(rng), g(rng));
      const double dv = xn.dot(paper_p() * xn) - v0;
      sum += dv;
      sq += dv * dv;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sq / n - mean * mean) / n);
    const double exact =
        smpc::expected_decrease_autonomous(paper_p(), c.sys.A, c.noise.sigma_w, x);
    EXPECT_LE(std::abs(mean - exact), 3.0 * se) << x.transpose();
  }
}

TEST(MpcNoiseOffset, TrivialCases) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const double one = (c.Q * c.noise.sigma_w).trace();
  EXPECT_NEAR(smpc::mpc_noise_offset(c.Q, c.sys.A, c.noise.sigma_w, 1), one, 1e-16);
  EXPECT_NEAR(smpc::mpc_noise_offset(c.Q, Matrix::Zero(2, 2), c.noise.sigma_w, 7), one, 1e-16);
  EXPECT_THROW(smpc::mpc_noise_offset(c.Q, c.sys.A, c.noise.sigma_w, 0), smpc::Error);
}

TEST(Recurrence, CountsExcursionsOnSyntheticFlags) {
  const Membership I = Membership::kInside;
  const Membership O = Membership::kOutside;
  const Membership U = Membership::kIndeterminate;
  smpc::RecurrenceStats s;
  smpc::accumulate_recurrence({I, O, O, I, I, O, I, U, O}, s);
  EXPECT_EQ(s.excursions, 3);
  EXPECT_EQ(s.unreturned, 1);
  EXPECT_EQ(s.hitting_times.at(2), 1);
  EXPECT_EQ(s.hitting_times.at(1), 1);
  EXPECT_EQ(s.max_hitting_time, 2);
  EXPECT_EQ(s.inside_steps, 4);
  EXPECT_EQ(s.outside_steps, 5);

  smpc::RecurrenceStats t;
  smpc::accumulate_recurrence({O, O, O, I}, t);
  EXPECT_EQ(t.excursions, 1);
  EXPECT_EQ(t.hitting_times.at(3), 1);
  EXPECT_EQ(t.unreturned, 0);
}

TEST(Beta, BoundsNoiseFreeTrajectories) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const smpc::ExpBeta beta = smpc::beta_from_dynamics(c.sys.A);
  EXPECT_GT(beta.lambda, smpc::spectral_radius(c.sys.A));
  EXPECT_LT(beta.lambda, 1.0);
  EXPECT_GE(beta.C, 1.0);
  std::vector<smpc::TrajectoryRecord> runs;
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g;
  for (int r = 0; r < 50; ++r) {
    smpc::TrajectoryRecord t;
    Vector x = vec2(5.0 * g(rng), 5.0 * g(rng));
    for (int k = 0; k <= 300; ++k) {
      t.states.push_back(x);
      x = c.sys.A * x;
    }
    runs.push_back(t);
  }
  EXPECT_EQ(smpc::calibrate_rho(runs, beta, 300, 1.0), 0.0);
  const smpc::IsspEmpirical e = smpc::issp_empirical_check(runs, 0.0, 300, beta, 0.0);
  EXPECT_TRUE(e.pass);
  EXPECT_EQ(e.fraction, 1.0);
}

TEST(Beta, CalibrationQuantile) {
  smpc::ExpBeta zero;
  zero.C = 0.0;  // beta == 0, so the excess is max_i ||x_i||
  std::vector<smpc::TrajectoryRecord> runs;
  for (int r = 1; r <= 10; ++r) {
    smpc::TrajectoryRecord t;
    t.states = {vec2(0.0, 0.0), vec2(static_cast<double>(r), 0.0)};
    runs.push_back(t);
  }
  EXPECT_EQ(smpc::calibrate_rho(runs, zero, 1, 0.9), 9.0);
  EXPECT_EQ(smpc::calibrate_rho(runs, zero, 1, 1.0), 10.0);
  EXPECT_EQ(smpc::calibrate_rho(runs, zero, 0, 1.0), 0.0);
  const smpc::IsspEmpirical e = smpc::issp_empirical_check(runs, 0.1, 1, zero, 9.0);
  EXPECT_DOUBLE_EQ(e.fraction, 0.9);
  EXPECT_TRUE(e.pass);
  EXPECT_FALSE(smpc::issp_empirical_check(runs, 0.05, 1, zero, 9.0).pass);
}

TEST(Certify, PaperDataPasses) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const smpc::MpcProblemData d = smpc::assemble(c);
  const smpc::IsspCertificate k =
      smpc::certify(c.sys, c.noise, paper_p(), c.Q, c.horizon, c.x_set(), &d);
  EXPECT_TRUE(k.assumption_stable);
  EXPECT_TRUE(k.sublevel_in_x0);
  EXPECT_TRUE(k.certified());
  EXPECT_NEAR(k.rho, 0.0273275, 1e-12);
  EXPECT_NEAR(k.gamma, 1.1 * k.gamma_min, 1e-15);
  EXPECT_FALSE(k.witness.has_value());
}

TEST(Certify, LargeNoiseGivesWitness) {
  smpc::ExperimentConfig c = smpc::paper_config();
  c.noise.sigma_w *= 1e4;
  const smpc::IsspCertificate k =
      smpc::certify(c.sys, c.noise, paper_p(), c.Q, c.horizon, c.x_set(), nullptr);
  EXPECT_TRUE(k.assumption_stable);
  // gamma_min is linear in the noise scale.
  EXPECT_NEAR(k.gamma_min, 1e4 * smpc::gamma_threshold(paper_p(), c.sys.A, c.noise.sigma_w / 1e4),
              1e-9 * k.gamma_min);
  EXPECT_FALSE(k.certified());
  ASSERT_TRUE(k.witness.has_value());
  EXPECT_FALSE(c.x_set().contains(*k.witness));
  EXPECT_NEAR(k.witness->dot(paper_p() * *k.witness), k.gamma, 1e-9 * k.gamma);
}

TEST(Certify, UnstableSystemFailsStabilityGate) {
  smpc::ExperimentConfig c = smpc::paper_config();
  c.sys.A *= 1.05;
  const smpc::IsspCertificate k =
      smpc::certify(c.sys, c.noise, paper_p(), c.Q, c.horizon, c.x_set(), nullptr);
  EXPECT_GT(k.spectral_radius, 1.0);
  EXPECT_FALSE(k.assumption_stable);
  EXPECT_FALSE(k.certified());
}

}  // namespace
