#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "smpc/config.hpp"
#include "smpc/model.hpp"

namespace {

using smpc::Matrix;
using smpc::Vector;

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

TEST(Step, PaperSystemFromInitialState) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const Vector x = smpc::step(c.sys, vec({10.0, 0.0}), vec({0.0}), vec({0.0, 0.0}));
  EXPECT_NEAR(x(0), 9.24, 1e-15);
  EXPECT_NEAR(x(1), 0.50, 1e-15);
}

TEST(Step, DimensionMismatchThrows) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  EXPECT_THROW(smpc::step(c.sys, vec({1.0}), vec({0.0}), vec({0.0, 0.0})), smpc::Error);
}

TEST(Step, NominalPlusErrorDecomposition) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g;
  Vector z = vec({3.0, -1.0});
  Vector e = vec({0.2, 0.1});
  for (int k = 0; k < 50; ++k) {
    const Vector u = vec({5.0 * g(rng)});
    const Vector w = vec({0.1 * g(rng), 0.1 * g(rng)});
    const Vector x = smpc::step(c.sys, z + e, u, w);
    z = smpc::nominal_step(c.sys, z, u);
    e = smpc::error_step(c.sys, e, w);
    EXPECT_LE((x - (z + e)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Covariance, RecursionPsdMonotoneAndConvergent) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  const smpc::CovarianceSequence seq = smpc::propagate_covariance(c.sys, c.noise, 500);
  ASSERT_EQ(seq.size(), 501u);
  EXPECT_EQ(smpc::max_abs(seq[0]), 0.0);
  EXPECT_LE(smpc::max_abs(seq[1] - c.noise.sigma_w), 0.0);
  for (std::size_t i = 1; i < seq.size(); ++i) {
    const Matrix expected = c.sys.A * seq[i - 1] * c.sys.A.transpose() + c.noise.sigma_w;
    EXPECT_LE(smpc::max_abs(seq[i] - expected), 1e-15);
    EXPECT_GE(smpc::lambda_min(seq[i]), -1e-15);
    EXPECT_GE(smpc::lambda_min(seq[i] - seq[i - 1]), -1e-14) << "i=" << i;
  }
  const Matrix stationary = smpc::solve_dlyap(c.sys.A.transpose(), c.noise.sigma_w);
  EXPECT_LE(smpc::max_abs(seq.back() - stationary), 1e-10);
}

TEST(Noise, L2Norm) {
  const smpc::ExperimentConfig c = smpc::paper_config();
  EXPECT_NEAR(smpc::l2_noise_norm(c.noise), std::sqrt(0.0125), 1e-15);
  EXPECT_NEAR(smpc::l2_noise_norm(c.noise), 0.111803, 1e-6);
}

TEST(Polytope, BoxLayoutAndMembership) {
  const smpc::Polytope p = smpc::Polytope::box(vec({-1.0, -2.0}), vec({12.0, 4.0}));
  ASSERT_EQ(p.n_constraints(), 4);
  EXPECT_EQ(p.h(0), 12.0);
  EXPECT_EQ(p.h(1), 4.0);
  EXPECT_EQ(p.h(2), 1.0);
  EXPECT_EQ(p.h(3), 2.0);
  EXPECT_TRUE(p.contains(vec({10.0, 0.0})));
  EXPECT_TRUE(p.contains(vec({12.0, 4.0})));
  EXPECT_FALSE(p.contains(vec({12.0 + 1e-9, 0.0})));
  EXPECT_TRUE(p.origin_interior());
  EXPECT_THROW(smpc::Polytope::box(vec({1.0}), vec({1.0})), smpc::Error);
}

TEST(Polytope, RejectsZeroRow) {
  smpc::Polytope p{Matrix::Zero(1, 2), vec({1.0})};
  EXPECT_THROW(p.validate(), smpc::Error);
}

TEST(NoiseModel, RejectsIndefiniteCovariance) {
  smpc::NoiseModel n;
  n.sigma_w.resize(2, 2);
  n.sigma_w << 1.0, 2.0, 2.0, 1.0;
  EXPECT_THROW(n.validate(), smpc::Error);
}

}  // namespace
