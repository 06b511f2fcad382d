#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"
#include "tdclab/operators.hpp"
#include "tdclab/tdc.hpp"

using namespace tdclab;
using fixtures::kind_of;

namespace {

ProblemData identity_problem(std::size_t d, Vector b) {
  ProblemData pd;
  pd.A = Matrix::identity(d) * -1.0;
  pd.B = Matrix(d, d);
  pd.C = Matrix::identity(d) * -1.0;
  pd.C_inv = Matrix::identity(d) * -1.0;
  pd.b = std::move(b);
  return pd;
}

}  // namespace

TEST(ExactOperators, TabularOnPolicyClosedForm) {
  Instance inst = generate_garnet({4, 2, 4, 4, 17});
  inst.features.phi = Matrix::identity(4);
  inst.policies = PolicyPair::make(inst.policies.behavior, inst.policies.behavior);
  const Matrix P = induced_chain(inst.mdp, inst.policies.behavior);
  const Vector mu = stationary_distribution(P);
  const ExpectedOperators op = exact_operators(inst.mdp, inst.policies, inst.features, mu);

  const Matrix Xi = Matrix::diagonal(mu);
  const Matrix A = Xi * (P * inst.mdp.gamma - Matrix::identity(4));
  EXPECT_LE(max_abs(op.A - A), 1e-14);
  EXPECT_LE(max_abs(op.C + Xi), 1e-15);
  const Vector b = Xi * inst.mdp.reward;
  EXPECT_LE(max_abs(sub(op.b, b)), 1e-15);
}

TEST(ExactOperators, BVanishesAsGammaGoesToZero) {
  const Instance inst = generate_garnet({20, 4, 5, 6, 42, 1e-12});
  const Vector mu = stationary_distribution(induced_chain(inst.mdp, inst.policies.behavior));
  const ExpectedOperators op = exact_operators(inst.mdp, inst.policies, inst.features, mu);
  EXPECT_LE(max_abs(op.B), 1e-10);
}

TEST(ExactOperators, CIsSymmetric) {
  const ProblemData& pd = fixtures::reference_problem();
  EXPECT_EQ(pd.C, pd.C.transpose());
}

TEST(ExactOperators, MonteCarloConsistency) {
  const Instance& inst = fixtures::reference();
  const ProblemData& pd = fixtures::reference_problem();
  const std::size_t d = pd.dim(), n = 200'000;
  Matrix A(d, d), B(d, d), C(d, d);
  Vector b(d, 0.0);
  const TrajectorySampler sampler(inst.mdp, inst.policies);
  Rng rng(77);
  std::size_t s = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Observation o = sampler.step(s, rng);
    const SampleMatrices m = per_sample_matrices(o, inst.features, inst.policies.rho(o.s, o.a), inst.mdp.gamma);
    A += m.A;
    B += m.B;
    C += m.C;
    axpy(1.0, m.b, b);
    s = o.s_next;
  }
  const double inv = 1.0 / double(n);
  EXPECT_LE(fixtures::relative_frobenius(A * inv, pd.A), 0.05);
  EXPECT_LE(fixtures::relative_frobenius(B * inv, pd.B), 0.05);
  EXPECT_LE(fixtures::relative_frobenius(C * inv, pd.C), 0.05);
  EXPECT_LE(norm2(sub(scaled(b, inv), pd.b)) / norm2(pd.b), 0.05);
}

TEST(ExactOperators, DuplicateFeatureColumnIsSingular) {
  Instance inst = fixtures::reference_instance();
  for (std::size_t s = 0; s < inst.mdp.n_states; ++s) inst.features.phi(s, 1) = inst.features.phi(s, 0);
  const Vector mu = stationary_distribution(induced_chain(inst.mdp, inst.policies.behavior));
  EXPECT_EQ(kind_of([&] { exact_operators(inst.mdp, inst.policies, inst.features, mu); }),
            ErrorKind::kSingularOperator);
}

TEST(OptimalTheta, NegativeIdentity) {
  const Vector theta = optimal_theta(Matrix::identity(3) * -1.0, Vector{1.0, 1.0, 1.0});
  for (double v : theta) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(OptimalTheta, ZeroRhsGivesZero) {
  Rng rng(4);
  Matrix A(4, 4);
  for (double& x : A.data()) x = rng.normal();
  for (double v : optimal_theta(A, Vector(4, 0.0))) EXPECT_EQ(v, 0.0);
}

TEST(OptimalTheta, ResidualOnRandomWellConditionedSystems) {
  Rng rng(8);
  for (int trial = 0; trial < 10; ++trial) {
    Matrix A(8, 8);
    for (double& x : A.data()) x = rng.normal();
    for (std::size_t i = 0; i < 8; ++i) A(i, i) -= 10.0;
    const Vector b = fixtures::random_vector(rng, 8);
    const Vector theta = optimal_theta(A, b);
    EXPECT_LE(norm2(add(A * theta, b)), 1e-10 * (1 + norm2(b)));
  }
}

TEST(Mspbe, ZeroAtTheFixedPoint) {
  const ProblemData& pd = fixtures::reference_problem();
  EXPECT_LE(mspbe(pd, pd.theta_star), 1e-10 * (1 + norm2_sq(pd.b)));
  EXPECT_LE(norm2(add(pd.A * pd.theta_star, pd.b)), 1e-10);
}

TEST(Mspbe, IdentityOperators) {
  const ProblemData pd = identity_problem(3, Vector(3, 0.0));
  const Vector v{1.0, -2.0, 0.5};
  EXPECT_DOUBLE_EQ(mspbe(pd, v), norm2_sq(v));
}

TEST(Mspbe, MatchesDirectProjectedBellmanDefinition) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const Instance inst = generate_garnet({6, 3, 3, 3, seed});
    const ProblemData pd = build_problem(inst);
    const Matrix& Phi = inst.features.phi;
    const Matrix Xi = Matrix::diagonal(pd.mu);
    const Matrix P_target = induced_chain(inst.mdp, inst.policies.target);
    // Pi = Phi (Phi^T Xi Phi)^-1 Phi^T Xi
    const Matrix Pi = Phi * inverse(Phi.transpose() * Xi * Phi) * Phi.transpose() * Xi;
    Rng rng(seed);
    for (int k = 0; k < 10; ++k) {
      const Vector theta = fixtures::random_vector(rng, 3, 2.0);
      const Vector v = Phi * theta;
      const Vector Tv = add(inst.mdp.reward, scaled(P_target * v, inst.mdp.gamma));
      const Vector diff = sub(Pi * Tv, v);
      const double direct = dot(diff, Xi * diff);
      EXPECT_NEAR(mspbe(pd, theta), direct, 1e-8 * (1 + direct)) << "seed " << seed;
    }
  }
}

TEST(Psi, IdentityOperators) {
  const ProblemData pd = identity_problem(2, Vector(2, 0.0));
  const Vector v{0.3, -4.0};
  EXPECT_EQ(psi(pd, v), scaled(v, -1.0));
}

TEST(Psi, VanishesAtThetaStar) {
  const ProblemData& pd = fixtures::reference_problem();
  EXPECT_LE(max_abs(psi(pd, pd.theta_star)), 1e-10);
}

TEST(Psi, ResidualOnRandomTheta) {
  const ProblemData& pd = fixtures::reference_problem();
  Rng rng(12);
  for (int k = 0; k < 100; ++k) {
    const Vector theta = fixtures::random_in_ball(rng, pd.dim(), pd.R_theta);
    const Vector p = psi(pd, theta);
    EXPECT_LE(norm2(add(add(pd.C * p, pd.A * theta), pd.b)), 1e-10);
    // Stays inside the w-ball: ||psi|| <= ||C^-1|| (||b|| + ||A|| R_theta) <= R_w.
    EXPECT_LE(norm2(p), spectral_norm(pd.C_inv) * (norm2(pd.b) + spectral_norm(pd.A) * pd.R_theta) + 1e-12);
    EXPECT_LE(norm2(p), pd.R_w);
  }
}

TEST(Spectral, NegativeIdentities) {
  const SpectralParams sp = spectral_params(Matrix::identity(3) * -1.0, Matrix(3, 3), Matrix::identity(3) * -1.0);
  EXPECT_NEAR(sp.lambda_theta, -2.0, 1e-14);
  EXPECT_NEAR(sp.lambda_w, -2.0, 1e-14);
  EXPECT_NEAR(sp.lambda_cm, 1.0, 1e-14);
}

TEST(Spectral, DiagonalC) {
  const Vector c{-1.0, -4.0};
  const SpectralParams sp = spectral_params(Matrix::identity(2) * -1.0, Matrix(2, 2), Matrix::diagonal(c));
  EXPECT_NEAR(sp.lambda_w, -2.0, 1e-14);
  EXPECT_NEAR(sp.lambda_cm, 1.0, 1e-14);
}

TEST(Spectral, PositiveCIsRejected) {
  EXPECT_EQ(kind_of([] { spectral_params(Matrix::identity(2) * -1.0, Matrix(2, 2), Matrix::identity(2)); }),
            ErrorKind::kNotNegativeDefinite);
}

TEST(Spectral, JacobiAgreesWithQuadraticRootsOnProjectedBlock) {
  const ProblemData& pd = fixtures::reference_problem();
  const Matrix M = pd.C * 2.0;
  const Matrix block{{M(0, 0), M(0, 1)}, {M(1, 0), M(1, 1)}};
  const double tr = block(0, 0) + block(1, 1);
  const double det = block(0, 0) * block(1, 1) - block(0, 1) * block(1, 0);
  const double disc = std::sqrt(tr * tr / 4 - det);
  const Vector ev = symmetric_eigenvalues(block);
  EXPECT_NEAR(ev[0], tr / 2 - disc, 1e-10);
  EXPECT_NEAR(ev[1], tr / 2 + disc, 1e-10);
}

TEST(Radii, UnitCase) {
  const Radii r = projection_radii(Matrix::identity(3) * -1.0, Vector{1.0, 0.0, 0.0}, Matrix::identity(3) * -1.0,
                                   Vector{1.0, 0.0, 0.0});
  EXPECT_NEAR(r.R_theta, 2.0, 1e-9);
  EXPECT_NEAR(r.R_w, 4.0, 1e-9);
}

TEST(ProblemData, Invariants) {
  for (std::uint64_t seed : {42u, 7u, 2019u}) {
    const Instance inst = generate_garnet({20, 4, 5, 6, seed});
    const ProblemData pd = build_problem(inst);
    EXPECT_LT(pd.lambda_theta, 0.0);
    EXPECT_LT(pd.lambda_w, 0.0);
    EXPECT_GT(pd.lambda_cm, 0.0);
    EXPECT_LE(max_abs(pd.C_inv * pd.C - Matrix::identity(pd.dim())), 1e-10);
    EXPECT_LE(norm2(pd.theta_star), pd.R_theta / 2 * (1 + 1e-12));
    EXPECT_GE(pd.R_w, 2 * spectral_norm(pd.C_inv) * spectral_norm(pd.A) * pd.R_theta * (1 - 1e-9));
    const Matrix P = induced_chain(inst.mdp, inst.policies.behavior);
    EXPECT_LE(norm1(sub(row_times(pd.mu, P), pd.mu)), 1e-12);
  }
}
