#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tdclab/bounds.hpp"
#include "tdclab/tdc.hpp"

using namespace tdclab;
using fixtures::kind_of;

namespace {

FeatureMap basis_features(std::size_t n_states, std::size_t d) {
  FeatureMap f{Matrix(n_states, d)};
  for (std::size_t s = 0; s < std::min(n_states, d); ++s) f.phi(s, s) = 1.0;
  return f;
}

}  // namespace

TEST(PerSampleMatrices, ZeroFeatureGivesZero) {
  FeatureMap f{Matrix(2, 3)};
  f.phi(1, 0) = 1.0;
  const SampleMatrices m = per_sample_matrices({0, 0, 1.0, 1}, f, 2.0, 0.9);
  EXPECT_EQ(m.A, Matrix(3, 3));
  EXPECT_EQ(m.B, Matrix(3, 3));
  EXPECT_EQ(m.C, Matrix(3, 3));
  EXPECT_EQ(m.b, Vector(3, 0.0));
}

TEST(PerSampleMatrices, UnitVectorsGammaZero) {
  const FeatureMap f = basis_features(2, 2);
  const SampleMatrices m = per_sample_matrices({0, 0, 1.0, 1}, f, 1.0, 0.0);
  EXPECT_EQ(m.A, (Matrix{{-1.0, 0.0}, {0.0, 0.0}}));
  EXPECT_EQ(m.B, Matrix(2, 2));
  EXPECT_EQ(m.C, (Matrix{{-1.0, 0.0}, {0.0, 0.0}}));
  EXPECT_EQ(m.b, (Vector{1.0, 0.0}));
}

TEST(ProjectBall, InteriorPointUnchanged) { EXPECT_EQ(project_ball(Vector{3.0, 4.0}, 10.0), (Vector{3.0, 4.0})); }

TEST(ProjectBall, RadialScaling) {
  const Vector p = project_ball(Vector{3.0, 4.0}, 2.5);
  EXPECT_DOUBLE_EQ(p[0], 1.5);
  EXPECT_DOUBLE_EQ(p[1], 2.0);
}

TEST(ProjectBall, IdempotentAndNonexpansive) {
  Rng rng(21);
  for (int k = 0; k < 1000; ++k) {
    const double R = 0.1 + 3.0 * rng.uniform();
    const Vector x = fixtures::random_vector(rng, 5, 2.0);
    const Vector y = fixtures::random_vector(rng, 5, 2.0);
    const Vector px = project_ball(x, R), py = project_ball(y, R);
    EXPECT_LE(norm2(px), R * (1 + 1e-15));
    EXPECT_LE(max_abs(sub(project_ball(px, R), px)), 1e-15 * R);
    EXPECT_LE(norm2(sub(px, py)), norm2(sub(x, y)) * (1 + 1e-12));
    if (norm2(x) > R) {
      // Exactly x * R / ||x||.
      const Vector expected = scaled(x, R / norm2(x));
      EXPECT_LE(max_abs(sub(px, expected)), 1e-15 * R);
    }
  }
}

TEST(TdcStep, ZeroStateIsolatesB) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const StepContext ctx{&inst.features, inst.mdp.gamma, pd.R_theta, pd.R_w};
  Rng rng(3);
  const Observation o = sample_step(inst.mdp, inst.policies, 5, rng);
  const double rho = inst.policies.rho(o.s, o.a);
  const SampleMatrices m = per_sample_matrices(o, inst.features, rho, inst.mdp.gamma);
  TdcState s = TdcState::zero(pd.dim());
  tdc_step(s, o, {0.3, 0.7}, rho, ctx);
  EXPECT_LE(max_abs(sub(s.theta, project_ball(scaled(m.b, 0.3), pd.R_theta))), 1e-15);
  EXPECT_LE(max_abs(sub(s.w, project_ball(scaled(m.b, 0.7), pd.R_w))), 1e-15);
  EXPECT_EQ(s.t, 1u);
}

TEST(TdcStep, NullStepOnlyAdvancesTime) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const StepContext ctx{&inst.features, inst.mdp.gamma, pd.R_theta, pd.R_w};
  Rng rng(4);
  TdcState s{fixtures::random_in_ball(rng, pd.dim(), pd.R_theta), fixtures::random_in_ball(rng, pd.dim(), pd.R_w), 9};
  const TdcState before = s;
  const Observation o = sample_step(inst.mdp, inst.policies, 0, rng);
  tdc_step(s, o, {0.0, 0.0}, inst.policies.rho(o.s, o.a), ctx);
  EXPECT_EQ(s.theta, before.theta);
  EXPECT_EQ(s.w, before.w);
  EXPECT_EQ(s.t, 10u);
}

TEST(TdcStep, RankOneMatchesDenseUpdate) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const StepContext ctx{&inst.features, inst.mdp.gamma, pd.R_theta, pd.R_w};
  const TrajectorySampler sampler(inst.mdp, inst.policies);
  Rng rng(5);
  std::size_t state = 0;
  for (int k = 0; k < 1000; ++k) {
    // Fresh random pre-step iterates each time, some of them on the sphere so
    // the projection is exercised.
    TdcState s{fixtures::random_in_ball(rng, pd.dim(), pd.R_theta), fixtures::random_in_ball(rng, pd.dim(), pd.R_w),
               std::uint64_t(k)};
    const StepSizes step{rng.uniform() * (k % 3 == 0 ? 50.0 : 0.5), rng.uniform() * (k % 3 == 0 ? 50.0 : 0.5)};
    const Observation o = sampler.step(state, rng);
    state = o.s_next;
    const double rho = inst.policies.rho(o.s, o.a);
    const TdcState dense = fixtures::dense_step(s, o, step, rho, inst.features, inst.mdp.gamma, pd.R_theta, pd.R_w);
    tdc_step(s, o, step, rho, ctx);
    ASSERT_LE(max_abs(sub(s.theta, dense.theta)), 1e-12 * (1 + pd.R_theta)) << "step " << k;
    ASSERT_LE(max_abs(sub(s.w, dense.w)), 1e-12 * (1 + pd.R_w)) << "step " << k;
    EXPECT_EQ(s.t, dense.t);
  }
}

TEST(TdcStep, BallInvariantsAlongTrajectory) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const StepContext ctx{&inst.features, inst.mdp.gamma, pd.R_theta, pd.R_w};
  const TrajectorySampler sampler(inst.mdp, inst.policies);
  Rng rng(6);
  std::size_t state = 0;
  TdcState s = TdcState::zero(pd.dim());
  for (int k = 0; k < 20000; ++k) {
    const Observation o = sampler.step(state, rng);
    state = o.s_next;
    // Large steps push the iterates onto the boundary.
    tdc_step(s, o, {5.0, 5.0}, inst.policies.rho(o.s, o.a), ctx);
    ASSERT_LE(norm2(s.theta), pd.R_theta * (1 + 1e-12));
    ASSERT_LE(norm2(s.w), pd.R_w * (1 + 1e-12));
  }
}

TEST(Stepsize, DiminishingAtZeroIsTheConstant) {
  const StepSizes s = stepsize_at(Diminishing{1.0, 2.5, 0.7, 0.3}, 0);
  EXPECT_EQ(s.alpha, 1.0);
  EXPECT_EQ(s.beta, 2.5);
}

TEST(Stepsize, DiminishingClosedForm) {
  const StepSizes s = stepsize_at(Diminishing{4.0, 4.0, 0.6, 0.4}, 3);
  EXPECT_NEAR(s.alpha, 1.741101, 1e-6);
  EXPECT_NEAR(s.alpha, 4.0 / std::pow(4.0, 0.6), 1e-15);
  EXPECT_NEAR(s.beta, 4.0 / std::pow(4.0, 0.4), 1e-15);
}

TEST(Stepsize, ConstantAnyT) {
  for (std::uint64_t t : {0ull, 17ull, 1'000'000'000ull}) {
    const StepSizes s = stepsize_at(Constant{0.1, 0.02}, t);
    EXPECT_EQ(s.alpha, 0.1);
    EXPECT_EQ(s.beta, 0.02);
  }
}

TEST(Stepsize, BlockwiseLookupAndHorizon) {
  const Blockwise plan{{{0.4, 0.2, 2}, {0.2, 0.1, 3}}, 0.5};
  EXPECT_EQ(stepsize_at(plan, 1).alpha, 0.4);
  EXPECT_EQ(stepsize_at(plan, 2).alpha, 0.2);
  EXPECT_EQ(stepsize_at(plan, 4).beta, 0.1);
  EXPECT_EQ(kind_of([&] { stepsize_at(plan, 5); }), ErrorKind::kHorizonExceeded);
  EXPECT_EQ(plan.total_steps(), 5u);
}

TEST(Stepsize, ValidateRejectsBrokenSchedules) {
  EXPECT_EQ(kind_of([] { validate(Diminishing{1, 1, 0.5, 0.7}); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([] { validate(Diminishing{0, 1, 0.5, 0.3}); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([] { validate(Diminishing{1, 1, 1.2, 0.3}); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([] { validate(Constant{0.1, 0.0}); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([] { validate(Blockwise{{{0.1, 0.1, 0}}, 1.0}); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([] { validate(Blockwise{{{0.1, 0.1, 2}, {0.2, 0.2, 2}}, 1.0}); }), ErrorKind::kInvalidArgument);
  EXPECT_EQ(kind_of([] { validate(Blockwise{{{0.1, 0.3, 2}}, 1.0}); }), ErrorKind::kInvalidArgument);
  EXPECT_FALSE(kind_of([] { validate(Diminishing{1.8, 1.8, 0.45, 0.30}); }));
}

TEST(Grid, GeometricStartsAtZeroEndsAtSteps) {
  const auto g = geometric_grid(1000, 1.05);
  EXPECT_EQ(g.front(), 0u);
  EXPECT_EQ(g.back(), 1000u);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1], g[i]);
  // Ratio is honoured once rounding stops dominating.
  for (std::size_t i = 1; i + 1 < g.size(); ++i)
    if (g[i] >= 100) EXPECT_NEAR(double(g[i + 1]) / double(g[i]), 1.05, 0.01);
  EXPECT_EQ(geometric_grid(0), (std::vector<std::uint64_t>{0}));
}

TEST(Grid, Arithmetic) {
  EXPECT_EQ(arithmetic_grid(10, 4), (std::vector<std::uint64_t>{0, 4, 8, 10}));
  EXPECT_EQ(arithmetic_grid(8, 4), (std::vector<std::uint64_t>{0, 4, 8}));
  EXPECT_EQ(kind_of([] { arithmetic_grid(8, 0); }), ErrorKind::kInvalidArgument);
}

TEST(RunTdc, ZeroStepsRecordsInitialErrors) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const std::vector<std::uint64_t> grid{0};
  const RunTrace tr = run_tdc(inst, pd, Constant{0.1, 0.02}, 0, 1, grid);
  ASSERT_EQ(tr.points.size(), 1u);
  EXPECT_EQ(tr.points[0].t, 0u);
  EXPECT_EQ(tr.points[0].theta_sq_err, norm2_sq(pd.theta_star));
  EXPECT_DOUBLE_EQ(tr.points[0].z_sq_err, norm2_sq(psi(pd, Vector(pd.dim(), 0.0))));
}

TEST(RunTdc, FrozenIteratesWithZeroSteps) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  // Schedules reject zero stepsizes, so drive the step function directly.
  const StepContext ctx{&inst.features, inst.mdp.gamma, pd.R_theta, pd.R_w};
  const TrajectorySampler sampler(inst.mdp, inst.policies);
  Rng rng(8);
  std::size_t state = 0;
  TdcState s = TdcState::zero(pd.dim());
  for (int k = 0; k < 100; ++k) {
    const Observation o = sampler.step(state, rng);
    state = o.s_next;
    tdc_step(s, o, {0.0, 0.0}, inst.policies.rho(o.s, o.a), ctx);
    ASSERT_EQ(s.theta, Vector(pd.dim(), 0.0));
    ASSERT_EQ(s.w, Vector(pd.dim(), 0.0));
  }
}

TEST(RunTdc, DeterministicGivenSeed) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const auto grid = geometric_grid(5000);
  const RunTrace a = run_tdc(inst, pd, Diminishing{1.8, 1.8, 0.45, 0.3}, 5000, 99, grid);
  const RunTrace b = run_tdc(inst, pd, Diminishing{1.8, 1.8, 0.45, 0.3}, 5000, 99, grid);
  const RunTrace c = run_tdc(inst, pd, Diminishing{1.8, 1.8, 0.45, 0.3}, 5000, 100, grid);
  ASSERT_EQ(a.points.size(), grid.size());
  bool differs = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    EXPECT_EQ(a.points[i].t, grid[i]);
    EXPECT_EQ(a.points[i].theta_sq_err, b.points[i].theta_sq_err);
    EXPECT_EQ(a.points[i].z_sq_err, b.points[i].z_sq_err);
    differs = differs || a.points[i].theta_sq_err != c.points[i].theta_sq_err;
  }
  EXPECT_TRUE(differs);
}

TEST(RunTdc, RejectsGridBeyondSteps) {
  const std::vector<std::uint64_t> grid{0, 11};
  EXPECT_EQ(kind_of([&] {
              run_tdc(fixtures::reference(), fixtures::reference_problem(), Constant{0.1, 0.1}, 10, 1, grid);
            }),
            ErrorKind::kInvalidArgument);
}

// Simulate the tracking-error recursion on the same observations and compare
// with the original iterates.
TEST(RunTdc, ZFormReconstruction) {
  const Instance inst = generate_garnet({20, 4, 5, 6, 42});
  const ProblemData pd = build_problem(inst);
  const StepContext ctx{&inst.features, inst.mdp.gamma, pd.R_theta, pd.R_w};
  const TrajectorySampler sampler(inst.mdp, inst.policies);
  const Diminishing sched{1.8, 1.8, 0.45, 0.30};
  Rng rng(2024);
  std::size_t state = 0;

  TdcState orig = TdcState::zero(pd.dim());
  Vector theta(pd.dim(), 0.0);
  Vector z = sub(orig.w, psi(pd, theta));
  double worst = 0.0;
  for (std::uint64_t t = 0; t < 1000; ++t) {
    const Observation o = sampler.step(state, rng);
    state = o.s_next;
    const double rho = inst.policies.rho(o.s, o.a);
    const StepSizes step = stepsize_at(sched, t);

    const HelperSplit h = helper_split(theta, z, o, pd, inst.features, rho);
    // C^-1 (b + A theta) = -psi(theta)
    const Vector shift_before = scaled(psi(pd, theta), -1.0);
    Vector theta_next = project_ball(add(theta, scaled(add(h.f1, h.g1), step.alpha)), pd.R_theta);
    const Vector w_next = project_ball(add(sub(z, shift_before), scaled(add(h.f2, h.g2), step.beta)), pd.R_w);
    z = add(w_next, scaled(psi(pd, theta_next), -1.0));
    theta = std::move(theta_next);

    tdc_step(orig, o, step, rho, ctx);
    const Vector z_orig = sub(orig.w, psi(pd, orig.theta));
    worst = std::max({worst, max_abs(sub(theta, orig.theta)), max_abs(sub(z, z_orig))});
  }
  EXPECT_LE(worst, 1e-9);
}

TEST(RunBlockwise, SingleBlockEqualsConstantRun) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const Blockwise plan{{{0.05, 0.1, 3000}}, 2.0};
  const auto grid = geometric_grid(3000);
  const RunTrace a = run_blockwise(inst, pd, plan, 17, grid);
  const RunTrace b = run_tdc(inst, pd, Constant{0.05, 0.1}, 3000, 17, grid);
  ASSERT_EQ(a.points.size(), b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    EXPECT_EQ(a.points[i].theta_sq_err, b.points[i].theta_sq_err);
    EXPECT_EQ(a.points[i].z_sq_err, b.points[i].z_sq_err);
  }
  ASSERT_EQ(a.block_ends, (std::vector<std::uint64_t>{3000}));
  EXPECT_EQ(a.block_points[0].theta_sq_err, a.points.back().theta_sq_err);
}

TEST(RunBlockwise, BoundaryBookkeeping) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const Blockwise plan{{{0.08, 0.04, 100}, {0.04, 0.02, 250}, {0.02, 0.01, 400}}, 0.5};
  const auto grid = arithmetic_grid(plan.total_steps(), 50);
  const RunTrace tr = run_blockwise(inst, pd, plan, 3, grid);
  EXPECT_EQ(tr.block_ends, (std::vector<std::uint64_t>{100, 350, 750}));
  EXPECT_EQ(tr.block_points.size(), 3u);
  EXPECT_EQ(tr.points.back().t, 750u);
  // Block ends that coincide with grid points carry the same measurement.
  EXPECT_EQ(tr.block_points[0].theta_sq_err, tr.points[2].theta_sq_err);
}

TEST(RunBlockwise, TrajectoryContinuesAcrossBlocks) {
  // Two blocks with equal stepsizes are not allowed, so compare against the
  // blockwise schedule driven through run_tdc, which runs one chain.
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const Blockwise plan{{{0.08, 0.04, 100}, {0.04, 0.02, 250}}, 0.5};
  const auto grid = arithmetic_grid(plan.total_steps(), 25);
  const RunTrace a = run_blockwise(inst, pd, plan, 11, grid);
  const RunTrace b = run_tdc(inst, pd, plan, plan.total_steps(), 11, grid);
  for (std::size_t i = 0; i < a.points.size(); ++i) EXPECT_EQ(a.points[i].theta_sq_err, b.points[i].theta_sq_err);
}
