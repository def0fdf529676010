#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tcm/verify.hpp"

using namespace tcm;

namespace {

StepConfig fixed(double dt, double end_time) {
  StepConfig sc;
  sc.dt = dt;
  sc.end_time = end_time;
  return sc;
}

CoeffSet variable_kappa() {
  CoeffSet c;
  c.kappa = CoeffFn::quadratic(1.0, 1.0);
  return c;
}

}  // namespace

TEST(SmallData, DivergenceFreeAndScaled) {
  const Grid g(24, 24, 1.0, 1.0);
  const State a = small_data_state(g, 0.1), b = small_data_state(g, 0.2);
  EXPECT_LT(norm(divergence(a.u)), 1e-10 * norm(a.u));
  EXPECT_NEAR(total_energy(b), 4.0 * total_energy(a), 1e-12 * total_energy(b));
  EXPECT_GT(norm(a.u), 0.0);
  EXPECT_GT(norm(a.v), 0.0);
}

TEST(Perturbation, UnitEnergyDivergenceFreeAndSeeded) {
  const Grid g(24, 24, 1.0, 1.0);
  const State p = perturbation_field(g, 3);
  EXPECT_NEAR(total_energy(p), 1.0, 1e-12);
  EXPECT_LT(norm(divergence(p.u)), 1e-9 * norm(p.u));
  EXPECT_EQ(p, perturbation_field(g, 3));
  EXPECT_NE(p.theta, perturbation_field(g, 4).theta);
}

TEST(OperatorSuite, SkewFormPasses) {
  const auto r = operator_algebra_suite(32, 20);
  EXPECT_TRUE(r.passed);
  EXPECT_EQ(r.pairs, 20);
  for (double v : {r.duality, r.skew, r.skew_self, r.tensor_pair, r.gradient_pair}) EXPECT_LE(v, 1e-12);
}

TEST(OperatorSuite, ConvectiveFormFailsSkewChecks) {
  const auto r = operator_algebra_suite(32, 20, AdvectionForm::convective);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.skew, 1e-6);
  EXPECT_LE(r.duality, 1e-12);
}

TEST(Mms, ExactFieldsAreConsistent) {
  const Grid g(31, 31, 1.0, 1.0);
  const State s = mms_exact(mms_default(), g, 0.3);
  EXPECT_LT(norm(divergence(s.u)), 1e-10 * norm(s.u));
  EXPECT_DOUBLE_EQ(s.t, 0.3);
  const State s0 = mms_exact(mms_default(), g, 0.0);
  EXPECT_NEAR(norm(s.theta), std::exp(-0.3) * norm(s0.theta), 1e-12);
}

TEST(Mms, DiscreteForcingFixtureReachesSolverFloor) {
  const auto t = mms_convergence(mms_fixture(), {7, 15, 31}, 0.02, 4);
  EXPECT_TRUE(t.floor);
  for (const auto& r : t.rows) {
    EXPECT_LT(r.u, 1e-9);
    EXPECT_LT(r.v, 1e-9);
    EXPECT_LT(r.theta, 1e-9);
  }
}

TEST(Mms, SpatialOrderNearTwo) {
  const auto t = mms_convergence(mms_default(), {15, 31, 63}, 0.01, 4);
  ASSERT_EQ(t.rows.size(), 3u);
  ASSERT_EQ(t.orders.size(), 2u);
  EXPECT_FALSE(t.floor);
  EXPECT_EQ(t.rows[1].steps, 4 * t.rows[0].steps);
  EXPECT_GE(t.min_order(), 1.8);
  EXPECT_LT(t.rows[2].theta, t.rows[0].theta);
}

TEST(Mms, TemporalOrderNearOne) {
  const auto t = mms_temporal(mms_default(), 63, 0.5, {5, 10, 20});
  ASSERT_EQ(t.orders.size(), 2u);
  EXPECT_GE(t.min_order(), 0.85);
  EXPECT_LE(t.min_order(), 1.3);
}

TEST(Mms, NeedsThreeGrids) {
  EXPECT_THROW(mms_convergence(mms_default(), {15, 31}, 0.01, 4), DomainError);
}

TEST(Decay, SmallDataSatisfiesBound) {
  const Grid g(24, 24, 1.0, 1.0);
  const auto d = decay_experiment(small_data_state(g), CoeffSet{}, fixed(2.5e-4, 0.2));
  EXPECT_TRUE(d.asserted);
  EXPECT_TRUE(d.passed) << d.message;
  EXPECT_TRUE(d.monotone_ok);
  EXPECT_TRUE(d.bound_ok);
  EXPECT_LE(d.worst_ratio, 1.0 + 1e-10);
  EXPECT_NEAR(d.alpha, 1.0 / d.c_star, 1e-12);
  EXPECT_GE(d.h1.r2, 0.99);
  EXPECT_GE(d.h2.r2, 0.99);
}

TEST(Decay, NeumannIsReportedNotAsserted) {
  const Grid g(16, 16, 1.0, 1.0, BcSet{Bc::dirichlet, Bc::dirichlet, Bc::neumann});
  State s(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) s.theta(i, j) = 1.0 + std::cos(std::numbers::pi * g.x(i));
  const auto d = decay_experiment(s, CoeffSet{}, fixed(1e-3, 0.05));
  EXPECT_FALSE(d.asserted);
  EXPECT_TRUE(d.passed);
  EXPECT_NE(d.message.find("neumann"), std::string::npos);
}

TEST(Decay, DetectsBoundViolationWhenAsserted) {
  const Grid g(16, 16, 1.0, 1.0);
  StepConfig sc = fixed(1e-3, 0.05);
  sc.forcing.theta = [](const Grid& gg, double) {
    ScalarField f(gg, Bc::dirichlet);
    for (double& x : f.values()) x = 50.0;
    return f;
  };
  const auto d = decay_experiment(small_data_state(g), CoeffSet{}, sc);
  EXPECT_TRUE(d.asserted);
  EXPECT_FALSE(d.passed);
  EXPECT_FALSE(d.bound_ok);
  EXPECT_FALSE(std::isnan(d.first_violation_t));
}

TEST(Uniqueness, LinearScalingAndBitwiseZero) {
  const Grid g(16, 16, 1.0, 1.0);
  const auto r = uniqueness_experiment(small_data_state(g), CoeffSet{}, fixed(1e-3, 0.1));
  EXPECT_TRUE(r.passed) << r.message;
  ASSERT_EQ(r.runs.size(), 3u);
  EXPECT_EQ(r.steps, 100);
  EXPECT_TRUE(r.runs[2].bitwise_identical);
  EXPECT_EQ(r.runs[2].sup_diff_sq, 0.0);
  ASSERT_EQ(r.scaling.size(), 1u);
  EXPECT_NEAR(r.scaling[0], 1.0, 1e-3);
  EXPECT_NEAR(r.runs[0].k_factor, 1.0, 1e-6);
  EXPECT_TRUE(r.runs[0].tail_decays);
}

TEST(Uniqueness, RejectsNegativeDelta) {
  const Grid g(8, 8, 1.0, 1.0);
  UniquenessOptions opt;
  opt.deltas = {-1e-6};
  EXPECT_THROW(uniqueness_experiment(State(g), CoeffSet{}, fixed(1e-3, 0.01), opt), ConfigError);
}

TEST(EnergySuite, ConstantAndVariableCoefficientsClose) {
  const Grid g(24, 24, 1.0, 1.0);
  for (const CoeffSet& c : {CoeffSet{}, variable_kappa()}) {
    const auto r = energy_identity_suite(small_data_state(g, 0.5), c, fixed(1e-3, 1.0), 20);
    EXPECT_TRUE(r.passed) << r.message;
    EXPECT_EQ(r.steps, 20);
    EXPECT_LE(r.max_ledger, 1e-10);
    EXPECT_LE(r.max_coupling, 1e-12);
    EXPECT_GE(r.min_dissipation_margin, -1e-10);
  }
}

TEST(EnergySuite, ConvectiveFormIsFlagged) {
  const Grid g(24, 24, 1.0, 1.0);
  StepConfig sc = fixed(1e-3, 1.0);
  sc.advection = AdvectionForm::convective;
  const auto r = energy_identity_suite(small_data_state(g, 0.5), CoeffSet{}, sc, 5);
  EXPECT_FALSE(r.passed);
  EXPECT_GT(r.first_failure, 0);
  EXPECT_GT(r.max_coupling, 1e-10);
}

TEST(VariableCoefficient, ComparisonBandHolds) {
  const Grid g(24, 24, 1.0, 1.0);
  RunOptions opt;
  opt.record_interval = 5;
  const auto r = variable_coefficient_experiment(small_data_state(g, 0.5), variable_kappa(),
                                                 fixed(1e-3, 0.05), opt);
  EXPECT_TRUE(r.passed);
  EXPECT_TRUE(r.ledger_ok);
  EXPECT_EQ(r.comparison_checks, 2 * 11);
  EXPECT_GE(r.worst_lower_margin, -1e-8);
  EXPECT_GE(r.worst_upper_margin, -1e-8);
}

TEST(Stokes, ManufacturedCaseRecovered) {
  const auto s = stokes_check(32);
  EXPECT_TRUE(s.passed);
  EXPECT_LT(s.u_error, 1e-8);
  EXPECT_LT(s.p_error, 1e-8);
  EXPECT_LT(s.energy_identity, 1e-10);
  EXPECT_NEAR(s.pressure_mean, 0.0, 1e-12);
  EXPECT_LT(s.result.div_residual, 1e-9);
}

TEST(Stokes, ConstantViscosityCaseIsConsistent) {
  const Grid g(24, 24, 1.0, 1.0);
  const auto c = stokes_manufactured(g, false);
  for (double m : c.mu.values()) EXPECT_DOUBLE_EQ(m, 1.0);
  EXPECT_LT(norm(divergence(c.u)), 1e-12 * norm(c.u));
}
