#include <gtest/gtest.h>

#include <cmath>

#include "smpc/config.hpp"
#include "smpc/policy.hpp"

namespace {

using smpc::Branch;
using smpc::Membership;
using smpc::Vector;

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

const smpc::MpcProblemData& paper_data() {
  static const smpc::MpcProblemData d = smpc::assemble(smpc::paper_config());
  return d;
}

TEST(FeasibleSet, InsideAndOutside) {
  const smpc::MpcProblemData& d = paper_data();
  EXPECT_EQ(smpc::in_feasible_set(d, Vector::Zero(2)), Membership::kInside);
  EXPECT_EQ(smpc::in_feasible_set(d, vec2(10.0, 0.0)), Membership::kInside);
  EXPECT_EQ(smpc::in_feasible_set(d, vec2(13.0, 0.0)), Membership::kOutside);
  EXPECT_EQ(smpc::in_feasible_set(d, vec2(-1.5, 0.0)), Membership::kOutside);
}

TEST(CombinedPolicy, MpcBranchUsesFirstOptimalInput) {
  const smpc::MpcProblemData& d = paper_data();
  const Vector x = vec2(10.0, 0.0);
  const smpc::PolicyDecision p = smpc::combined_policy(d, x);
  EXPECT_EQ(p.branch, Branch::kMpc);
  EXPECT_TRUE(p.feasible);
  EXPECT_EQ(p.input(0), smpc::mpc_policy(d, x)(0));
  EXPECT_EQ(p.value_nominal, smpc::nominal_value(d, x));
}

TEST(CombinedPolicy, BackupIsExactlyZero) {
  const smpc::MpcProblemData& d = paper_data();
  const smpc::PolicyDecision p = smpc::combined_policy(d, vec2(-1.5, 0.3));
  EXPECT_EQ(p.branch, Branch::kBackup);
  EXPECT_FALSE(p.feasible);
  ASSERT_EQ(p.input.size(), 1);
  EXPECT_EQ(p.input(0), 0.0);
}

// Along x = (-s, 0) the binding constraint of the feasible set is the
// untightened row x1 >= -1 on z_0, so the boundary sits at x1 = -1 exactly.
TEST(BoundaryScaling, KnownBoundary) {
  const smpc::MpcProblemData& d = paper_data();
  ASSERT_EQ(smpc::in_feasible_set(d, vec2(-1.0 + 1e-9, 0.0)), Membership::kInside);
  EXPECT_NEAR(smpc::boundary_scaling(d, vec2(-2.0, 0.0), 1e-8), 0.5, 1e-8);
  EXPECT_NEAR(smpc::boundary_scaling(d, vec2(-1.0 / 0.999, 0.0), 1e-8), 0.999, 1e-8);
  EXPECT_EQ(smpc::boundary_scaling(d, vec2(-0.5, 0.0)), 1.0);
}

TEST(BoundaryScaling, ResultIsInsideAndJustBeyondIsNot) {
  const smpc::MpcProblemData& d = paper_data();
  for (const Vector& x : {vec2(13.0, 3.0), vec2(-3.0, -3.0), vec2(5.0, 6.0), vec2(-2.0, 4.5)}) {
    const double a = smpc::boundary_scaling(d, x, 1e-8);
    EXPECT_GT(a, 0.0);
    EXPECT_LT(a, 1.0);
    EXPECT_EQ(smpc::in_feasible_set(d, a * x), Membership::kInside);
    EXPECT_NE(smpc::in_feasible_set(d, (a + 2e-8) * x), Membership::kInside);
  }
}

TEST(LyapunovCandidate, EqualsNominalValueInside) {
  const smpc::MpcProblemData& d = paper_data();
  const Vector x = vec2(6.0, 1.0);
  EXPECT_EQ(smpc::lyapunov_candidate(d, x), smpc::nominal_value(d, x));
  EXPECT_EQ(smpc::lyapunov_candidate(d, Vector::Zero(2)), 0.0);
}

TEST(LyapunovCandidate, ContinuousAcrossBoundary) {
  const smpc::MpcProblemData& d = paper_data();
  for (int k = 0; k < 8; ++k) {
    const double th = 2.0 * 3.141592653589793 * k / 8.0 + 0.3;
    const Vector dir = vec2(20.0 * std::cos(th), 10.0 * std::sin(th));  // outside X
    const double a = smpc::boundary_scaling(d, dir, 1e-8);
    const Vector xb = a * dir;
    const double inside = smpc::nominal_value(d, xb);
    const double outside = smpc::lyapunov_candidate(d, 1.001 * xb, 1e-8);
    EXPECT_NEAR(outside, inside, 1e-3 * std::max(1.0, inside)) << "k=" << k;
  }
}

}  // namespace
