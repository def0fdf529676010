#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "support.hpp"
#include "tcm/diagnostics.hpp"
#include "tcm/io.hpp"
#include "tcm/stepper.hpp"

namespace tcm {
namespace {

using test::pi;

TEST(Norms, ZeroFieldAllZero) {
  const Grid g(10, 12, 1.0, 2.0);
  const auto n = norms(ScalarField(g, Bc::dirichlet));
  for (double v : {n.l2, n.l4, n.l6, n.lr, n.linf, n.h1, n.h2}) EXPECT_EQ(v, 0.0);
  const auto m = norms(VectorField(g, Bc::dirichlet));
  EXPECT_EQ(m.l2 + m.linf + m.h1 + m.h2, 0.0);
}

TEST(Norms, ConstantField) {
  const Grid g(63, 63, 1.0, 1.0);
  ScalarField f(g, Bc::dirichlet);
  f.fill(2.5);
  const auto n = norms(f, 3.0);
  const double area = g.nx() * g.ny() * g.cell_area();
  EXPECT_DOUBLE_EQ(n.linf, 2.5);
  EXPECT_NEAR(n.l2, 2.5 * std::sqrt(area), 1e-12);
  EXPECT_NEAR(n.l4, 2.5 * std::pow(area, 0.25), 1e-12);
  EXPECT_NEAR(n.l6, 2.5 * std::pow(area, 1.0 / 6.0), 1e-12);
  EXPECT_NEAR(n.lr, 2.5 * std::cbrt(area), 1e-12);
  EXPECT_NEAR(n.l2, 2.5, 2.5 * 2.0 * g.hx());
  EXPECT_EQ(n.r, 3.0);
}

TEST(Norms, SinSinHasHalfL2Norm) {
  for (int n : {16, 32, 64}) {
    const Grid g(n, n, 1.0, 1.0);
    const auto b = norms(test::sinsin(g));
    const double err = std::abs(b.l2 - 0.5);
    EXPECT_LT(err, 2.0 * g.hx() * g.hx());
    EXPECT_NEAR(b.linf, 1.0, pi * pi * g.hx() * g.hx());
    EXPECT_NEAR(b.h1, std::sqrt(2.0) * pi * 0.5, 0.05);
    EXPECT_NEAR(b.h2, 2.0 * pi * pi * 0.5, 0.2);
  }
}

TEST(Norms, LpOrderingOnUnitSquare) {
  const Grid g(20, 20, 1.0, 1.0);
  std::mt19937_64 rng(1);
  const auto f = test::random_field(g, Bc::dirichlet, rng);
  const auto n = norms(f, 5.0);
  EXPECT_LE(n.l2, n.l4);
  EXPECT_LE(n.l4, n.lr);
  EXPECT_LE(n.lr, n.l6);
  EXPECT_LE(n.l6, n.linf);
  EXPECT_EQ(lp_norm(f.values(), g.cell_area(), std::numeric_limits<double>::infinity()), n.linf);
}

TEST(Norms, VectorUsesPointwiseMagnitude) {
  const Grid g(9, 9, 1.0, 1.0);
  VectorField w(g, Bc::dirichlet);
  w.x.fill(3.0);
  w.y.fill(4.0);
  const auto n = norms(w);
  EXPECT_DOUBLE_EQ(n.linf, 5.0);
  EXPECT_NEAR(n.l4, 5.0 * std::pow(81 * g.cell_area(), 0.25), 1e-12);
  EXPECT_NEAR(n.l2 * n.l2, norms(w.x).l2 * norms(w.x).l2 + norms(w.y).l2 * norms(w.y).l2, 1e-12);
}

TEST(Poincare, UnitSquare128) {
  const Grid g(127, 127, 1.0, 1.0);
  const double c = poincare_constant(g);
  EXPECT_NEAR(c * 2.0 * pi * pi, 1.0, 0.005);
  const double lam_h = 2.0 * 4.0 / (g.hx() * g.hx()) * std::pow(std::sin(pi * g.hx() / 2.0), 2);
  EXPECT_NEAR(c * lam_h, 1.0, 1e-9);
}

TEST(Poincare, ScalesWithSideSquared) {
  const double c1 = poincare_constant(Grid(31, 31, 1.0, 1.0));
  const double c3 = poincare_constant(Grid(31, 31, 3.0, 3.0));
  EXPECT_NEAR(c3 / c1, 9.0, 1e-9);
}

TEST(Poincare, TwoByOneRectangle) {
  const double c = poincare_constant(Grid(127, 63, 2.0, 1.0));
  EXPECT_NEAR(c * pi * pi * (0.25 + 1.0), 1.0, 0.01);
}

TEST(Poincare, InequalityHoldsForRandomFields) {
  const Grid g(24, 24, 1.0, 1.0);
  const double c = poincare_constant(g);
  std::mt19937_64 rng(3);
  for (int k = 0; k < 20; ++k) {
    const auto f = test::random_field(g, Bc::dirichlet, rng);
    EXPECT_LE(inner(f, f), c * grad_norm_sq(f) * (1.0 + 1e-12));
  }
}

TEST(DecayFit, ExactExponential) {
  std::vector<double> t, v;
  for (int k = 0; k <= 40; ++k) {
    t.push_back(0.05 * k);
    v.push_back(3.0 * std::exp(-5.0 * t.back()));
  }
  const auto r = fit_decay_rate(t, v, FitWindow{});
  EXPECT_NEAR(r.rate, 5.0, 1e-10);
  EXPECT_NEAR(std::exp(r.intercept), 3.0, 1e-10);
  EXPECT_NEAR(r.r2, 1.0, 1e-12);
  EXPECT_EQ(r.samples, 41u);
}

TEST(DecayFit, ConstantSeries) {
  std::vector<double> t, v;
  for (int k = 0; k < 20; ++k) {
    t.push_back(k);
    v.push_back(0.7);
  }
  const auto r = fit_decay_rate(t, v);
  EXPECT_NEAR(r.rate, 0.0, 1e-14);
  EXPECT_GE(r.r2, 0.0);
  EXPECT_LE(r.r2, 1.0);
}

TEST(DecayFit, DefaultWindowIsTailHalf) {
  std::vector<double> t, v;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.01 * k);
    v.push_back(std::exp(-30.0 * t.back()) + std::exp(-2.0 * t.back()));
  }
  const auto r = fit_decay_rate(t, v, std::nullopt, true, 1.0);
  EXPECT_NEAR(r.t_begin, 0.5, 1e-12);
  EXPECT_NEAR(r.t_end, 1.0, 1e-12);
  EXPECT_NEAR(r.rate, 2.0, 0.01);
  EXPECT_NEAR(r.ratio, 1.0, 0.01);
  EXPECT_TRUE(r.squared);
  EXPECT_FALSE(r.convention.empty());
}

TEST(DecayFit, Errors) {
  std::vector<double> t{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<double> v(10, 1.0);
  v[7] = 0.0;
  EXPECT_THROW(fit_decay_rate(t, v, FitWindow{}), DomainError);
  v[7] = 1.0;
  EXPECT_THROW(fit_decay_rate(t, v), DomainError);
  EXPECT_NO_THROW(fit_decay_rate(t, v, FitWindow{}));
  t.pop_back();
  EXPECT_THROW(fit_decay_rate(t, v, FitWindow{}), DomainError);
}

TEST(DecayFit, HeatModeSquaredNormRate) {
  const Grid g(127, 127, 1.0, 1.0);
  State s(g);
  s.theta = test::sinsin(g);
  StepConfig sc;
  sc.dt = 1e-4;
  sc.end_time = 0.05;
  sc.transport = false;
  sc.coupling = false;
  sc.freeze_velocity = true;
  const auto r = run(s, CoeffSet{}, sc);
  std::vector<double> t, e;
  for (const auto& rec : r.records) {
    t.push_back(rec.t);
    e.push_back(rec.theta_l2 * rec.theta_l2);
  }
  const double c = poincare_constant(g);
  const auto fit = fit_decay_rate(t, e, std::nullopt, true, 1.0 / c);
  EXPECT_NEAR(fit.rate / (4.0 * pi * pi), 1.0, 0.02);
  EXPECT_GT(fit.r2, 0.9999);
}

std::vector<Snapshot> constant_trajectory(const Grid& g, double value, int count) {
  std::vector<Snapshot> traj;
  for (int k = 0; k < count; ++k) {
    ScalarField th(g, Bc::dirichlet);
    th.fill(value);
    traj.push_back({0.1 * k, th, VectorField(g, Bc::dirichlet)});
  }
  return traj;
}

TEST(DeGiorgi, LargeCapGivesZeroEnergies) {
  const Grid g(16, 16, 1.0, 1.0);
  std::vector<Snapshot> traj;
  for (int k = 0; k < 4; ++k) {
    ScalarField th = test::sinsin(g);
    th *= std::exp(-k * 0.5) * (k % 2 ? -1.0 : 1.0);
    traj.push_back({0.1 * k, th, VectorField(g, Bc::dirichlet)});
  }
  const auto r = degiorgi_monitor(traj, 2.0, 10, 1.0);
  for (double a : r.a) EXPECT_EQ(a, 0.0);
  EXPECT_TRUE(r.bounded);
  EXPECT_TRUE(r.monotone);
  for (std::size_t k = 1; k < r.levels.size(); ++k) EXPECT_GT(r.levels[k], r.levels[k - 1]);
  EXPECT_DOUBLE_EQ(r.levels[0], 1.0);
}

TEST(DeGiorgi, ConstantThetaClosedForm) {
  const Grid g(12, 12, 1.0, 1.0);
  const auto single = constant_trajectory(g, 1.0, 1);
  const auto r = degiorgi_monitor(single, 1.0, 12, 1.0);
  const double area = g.nx() * g.ny() * g.cell_area();
  for (int k = 0; k <= 12; ++k) {
    const double c = std::ldexp(1.0, -k - 1);
    EXPECT_DOUBLE_EQ(r.levels[k], 1.0 - c);
    EXPECT_NEAR(r.a_plus[k], c * c * area, 1e-15);
    EXPECT_EQ(r.a_minus[k], 0.0);
  }
  const auto traj = constant_trajectory(g, 1.0, 5);
  const auto q = degiorgi_monitor(traj, 1.0, 12, 2.0);
  ScalarField one(g, Bc::dirichlet);
  one.fill(1.0);
  const double per = area + 0.4 * grad_norm_sq(one) / 2.0;
  for (int k = 0; k <= 12; ++k) {
    const double c = std::ldexp(1.0, -k - 1);
    EXPECT_NEAR(q.a[k], c * c * per, 1e-12 * per);
    if (k > 0) {
      EXPECT_NEAR(q.a[k] / q.a[k - 1], 0.25, 1e-12);
    }
  }
  EXPECT_TRUE(q.monotone);
  EXPECT_TRUE(q.bounded);
}

TEST(DeGiorgi, NegativeSideUsesMinusTheta) {
  const Grid g(12, 12, 1.0, 1.0);
  const auto traj = constant_trajectory(g, -1.0, 1);
  const auto r = degiorgi_monitor(traj, 1.0, 3, 1.0);
  for (int k = 0; k <= 3; ++k) {
    EXPECT_EQ(r.a_plus[k], 0.0);
    EXPECT_GT(r.a_minus[k], 0.0);
  }
}

TEST(DeGiorgi, MonitorErrors) {
  const Grid g(8, 8, 1.0, 1.0);
  EXPECT_THROW(degiorgi_monitor({}, 1.0, 3, 1.0), DomainError);
  EXPECT_THROW(degiorgi_monitor(constant_trajectory(g, 1.0, 2), 0.0, 3, 1.0), DomainError);
}

TEST(DeGiorgi, BoundFormulaArithmetic) {
  EXPECT_DOUBLE_EQ(degiorgi_bound(1.0, 1.0, 1.0, 1.0), 16.0);
  EXPECT_DOUBLE_EQ(degiorgi_bound(1.0, 1.0, 1.0, 1.0, 5.0), 20.0);
  EXPECT_NEAR(degiorgi_bound(2.0, 3.0, 4.0, 5.0),
              16.0 * std::pow(4.0, 9.0 / 32) * std::pow(5.0, 3.0 / 32) * std::pow(2.0, 0.75) *
                  std::pow(3.0, 0.25),
              1e-12);
  EXPECT_THROW(degiorgi_bound(1.0, 1.0, 0.0, 1.0), DomainError);
}

TEST(DeGiorgi, ZeroTrajectoryGivesZeroBound) {
  const Grid g(8, 8, 1.0, 1.0);
  const auto traj = constant_trajectory(g, 0.0, 3);
  EXPECT_EQ(degiorgi_phi(traj), 0.0);
  EXPECT_EQ(degiorgi_phi_hat(traj), 0.0);
  EXPECT_EQ(degiorgi_bound(traj, 1.0, 1.0), 0.0);
  EXPECT_THROW(degiorgi_bound(std::vector<Snapshot>{}, 1.0, 1.0), DomainError);
}

TEST(DeGiorgi, PhiIngredients) {
  const Grid g(31, 31, 1.0, 1.0);
  std::vector<Snapshot> traj;
  const auto s = test::sinsin(g);
  for (int k = 0; k < 3; ++k) traj.push_back({0.5 * k, s, VectorField(s, s)});
  const double sup4 = norms(VectorField(s, s)).l4;
  const double g2 = grad_norm_sq(VectorField(s, s));
  EXPECT_NEAR(degiorgi_phi(traj), std::pow(sup4, 2.0 / 3) * std::pow(g2, 1.0 / 6), 1e-12);
  EXPECT_NEAR(degiorgi_phi_hat(traj), std::sqrt(norm(s)) * std::pow(grad_norm_sq(s), 0.25),
              1e-12);
}

TEST(DeGiorgi, SmallDataRunIsBounded) {
  const Grid g(24, 24, 1.0, 1.0);
  std::mt19937_64 rng(4);
  State s(g);
  s.theta = test::sinsin(g);
  s.theta *= 0.2;
  s.v = VectorField(test::random_field(g, Bc::dirichlet, rng, -0.1, 0.1),
                    test::random_field(g, Bc::dirichlet, rng, -0.1, 0.1));
  CoeffSet c;
  c.kappa = CoeffFn::quadratic(1.0, 1.0);
  StepConfig sc;
  sc.dt = 2e-3;
  sc.end_time = 0.2;
  RunOptions opt;
  opt.snapshot_interval = 5;
  const auto r = run(s, c, sc, opt);
  const auto rep = degiorgi_analysis(r.snapshots, c.sigma, 20);
  EXPECT_TRUE(rep.bounded);
  EXPECT_GE(rep.m, 4.0 * 0.2 * test::max_abs(test::sinsin(g)) - 1e-15);
  EXPECT_TRUE(rep.monotone);
  EXPECT_LT(rep.a.back(), 1e-8);
  EXPECT_GT(rep.c1, 0.0);
  EXPECT_GT(rep.c2, 0.0);
}

TEST(LevelRecursion, ThresholdCaseConverges) {
  const auto r = iterate_lemma22(1.0, 2.0, 2.0, 0.5, 40);
  EXPECT_DOUBLE_EQ(r.threshold, 0.5);
  EXPECT_TRUE(r.below_threshold);
  EXPECT_DOUBLE_EQ(r.a_k[1], 0.25);
  EXPECT_DOUBLE_EQ(r.a_k[2], 0.125);
  for (std::size_t k = 0; k < r.a_k.size(); ++k) EXPECT_DOUBLE_EQ(r.a_k[k], std::ldexp(1.0, -int(k) - 1));
  EXPECT_LT(r.a_k[40], 1e-12);
  EXPECT_TRUE(r.converged);
  EXPECT_FALSE(r.diverged);
}

TEST(LevelRecursion, ZeroStaysZero) {
  const auto r = iterate_lemma22(3.0, 5.0, 1.5, 0.0, 10);
  for (double a : r.a_k) EXPECT_EQ(a, 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(LevelRecursion, AboveThresholdDiverges) {
  const auto r = iterate_lemma22(1.0, 2.0, 2.0, 1.0, 40);
  EXPECT_FALSE(r.below_threshold);
  EXPECT_DOUBLE_EQ(r.a_k[1], 1.0);
  EXPECT_DOUBLE_EQ(r.a_k[2], 2.0);
  EXPECT_FALSE(r.converged);
  EXPECT_TRUE(r.diverged);
}

TEST(LevelRecursion, DomainErrors) {
  EXPECT_THROW(iterate_lemma22(0.0, 2.0, 2.0, 0.1, 5), DomainError);
  EXPECT_THROW(iterate_lemma22(1.0, 1.0, 2.0, 0.1, 5), DomainError);
  EXPECT_THROW(iterate_lemma22(1.0, 2.0, 1.0, 0.1, 5), DomainError);
  EXPECT_THROW(iterate_lemma22(1.0, 2.0, 2.0, -0.1, 5), DomainError);
}

TEST(Ledger, EquilibriumStep) {
  const Grid g(12, 12, 1.0, 1.0);
  const State s(g);
  StepConfig sc;
  const State n = Stepper(g, CoeffSet{}, sc).step(s, 1e-2);
  const auto r = energy_ledger(s, n, 1e-2, CoeffSet{}, sc);
  EXPECT_EQ(r.d_energy, 0.0);
  EXPECT_EQ(r.dissipation, 0.0);
  EXPECT_EQ(r.ledger_residual, 0.0);
}

TEST(Ledger, PureDiffusionStepClosesToSolverTolerance) {
  const Grid g(20, 20, 1.0, 1.0);
  std::mt19937_64 rng(2);
  State s(g);
  s.theta = test::random_field(g, Bc::dirichlet, rng);
  s.v = VectorField(test::random_field(g, Bc::dirichlet, rng),
                    test::random_field(g, Bc::dirichlet, rng));
  StepConfig sc;
  sc.transport = false;
  sc.coupling = false;
  CoeffSet c;
  c.kappa = CoeffFn::quadratic(1.0, 3.0);
  const State n = Stepper(g, c, sc).step(s, 5e-2);
  const auto r = energy_ledger(s, n, 5e-2, c, sc);
  EXPECT_LT(r.ledger_residual, 1e-10);
  EXPECT_LT(r.d_energy, 0.0);
  EXPECT_GE(r.dissipation, r.dissipation_floor * (1.0 - 1e-12));
  EXPECT_EQ(r.explicit_work, 0.0);
}

TEST(Ledger, FullNonlinearStepAtCflHalf) {
  const Grid g(32, 32, 1.0, 1.0);
  std::mt19937_64 rng(12);
  State s(g);
  s.theta = test::random_field(g, Bc::dirichlet, rng, -0.5, 0.5);
  s.v = VectorField(test::random_field(g, Bc::dirichlet, rng, -0.5, 0.5),
                    test::random_field(g, Bc::dirichlet, rng, -0.5, 0.5));
  s.u = project_div_free(VectorField(test::random_field(g, Bc::dirichlet, rng),
                                     test::random_field(g, Bc::dirichlet, rng)),
                         SolverSpec{}, nullptr)
            .u;
  StepConfig sc;
  sc.policy = DtPolicy::cfl;
  sc.cfl_target = 0.5;
  CoeffSet c;
  c.kappa = CoeffFn::quadratic(1.0, 1.0);
  const Stepper st(g, c, sc);
  const double dt = st.dt_for(s);
  const State n = st.step(s, dt);
  const auto r = energy_ledger(s, n, dt, c, sc);
  EXPECT_LT(r.ledger_residual, 1e-8);
  EXPECT_LT(r.coupling_residual, 1e-12);
  EXPECT_TRUE(r.all_finite());
  EXPECT_GE(r.energy, 0.0);
}

TEST(Ledger, ForcingWorkIsReported) {
  const Grid g(12, 12, 1.0, 1.0);
  StepConfig sc;
  sc.forcing.theta = [](const Grid& gg, double) { return test::sinsin(gg); };
  const State s(g);
  const State n = Stepper(g, CoeffSet{}, sc).step(s, 1e-2);
  const auto r = energy_ledger(s, n, 1e-2, CoeffSet{}, sc);
  EXPECT_GT(r.forcing_work, 0.0);
  EXPECT_GT(r.d_energy, 0.0);
  EXPECT_LT(r.ledger_residual, 1e-10);
}

class TempDir {
 public:
  TempDir() : path_(std::filesystem::temp_directory_path() / "tcm_test_io") {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

TEST(Io, LedgerCsvRoundTrip) {
  TempDir dir;
  const Grid g(12, 12, 1.0, 1.0);
  std::mt19937_64 rng(1);
  State s(g);
  s.theta = test::random_field(g, Bc::dirichlet, rng);
  const auto r = run(s, CoeffSet{}, [] {
    StepConfig sc;
    sc.dt = 1e-3;
    sc.end_time = 5e-3;
    return sc;
  }());
  write_ledger_csv(dir.path() / "sub" / "ledger.csv", r.records);
  const auto back = read_ledger_csv(dir.path() / "sub" / "ledger.csv");
  ASSERT_EQ(back.size(), r.records.size());
  for (std::size_t k = 0; k < back.size(); ++k) EXPECT_EQ(ledger_row(back[k]), ledger_row(r.records[k]));
}

TEST(Io, LedgerCsvRejectsBadInput) {
  TempDir dir;
  const auto p = dir.path() / "bad.csv";
  std::ofstream(p) << "a,b\n1,2\n";
  EXPECT_THROW(read_ledger_csv(p), DomainError);
  EXPECT_THROW(read_ledger_csv(dir.path() / "missing.csv"), Error);
}

TEST(Io, SnapshotRoundTrip) {
  TempDir dir;
  const Grid g(7, 5, 2.0, 1.0);
  std::mt19937_64 rng(8);
  const auto f = test::random_field(g, Bc::dirichlet, rng);
  write_snapshot_csv(dir.path() / "f.csv", f, 0.125);
  const auto s = read_snapshot_csv(dir.path() / "f.csv");
  EXPECT_EQ(s.nx, 7);
  EXPECT_EQ(s.ny, 5);
  EXPECT_EQ(s.lx, 2.0);
  EXPECT_EQ(s.t, 0.125);
  EXPECT_EQ(s.field(g, Bc::dirichlet), f);
  EXPECT_THROW(s.field(Grid(5, 7, 1.0, 1.0), Bc::dirichlet), DomainError);

  std::vector<Snapshot> set{{0.0, f, VectorField(f, f)}, {0.5, 2.0 * f, VectorField(f, -1.0 * f)}};
  write_snapshot_set(dir.path() / "snaps", set);
  const auto back = read_snapshot_set(dir.path() / "snaps", g);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].t, 0.5);
  EXPECT_EQ(back[1].theta, set[1].theta);
  EXPECT_EQ(back[1].v, set[1].v);
}

TEST(Io, CheckpointRoundTrip) {
  TempDir dir;
  const Grid g(9, 6, 1.0, 0.7, BcSet{Bc::dirichlet, Bc::neumann, Bc::dirichlet});
  std::mt19937_64 rng(5);
  State s(g);
  s.theta = test::random_field(g, Bc::dirichlet, rng);
  s.v = VectorField(test::random_field(g, Bc::neumann, rng), test::random_field(g, Bc::neumann, rng));
  s.p = test::random_field(g, Bc::dirichlet, rng);
  s.t = 0.1 + 0.2;
  s.step = 42;
  write_checkpoint(dir.path() / "c.ckpt", s, "[grid]\nnx = 9\n");
  const auto c = read_checkpoint(dir.path() / "c.ckpt");
  EXPECT_EQ(c.state, s);
  EXPECT_EQ(c.state.t, 0.1 + 0.2);
  EXPECT_EQ(c.state.grid().ly(), 0.7);
  EXPECT_EQ(c.state.grid().bc().v, Bc::neumann);
  EXPECT_EQ(c.config_echo, "[grid]\nnx = 9\n");
}

TEST(Io, CheckpointRejectsGarbage) {
  TempDir dir;
  std::ofstream(dir.path() / "g.ckpt") << "not a checkpoint\n";
  EXPECT_THROW(read_checkpoint(dir.path() / "g.ckpt"), DomainError);
}

}  // namespace
}  // namespace tcm
