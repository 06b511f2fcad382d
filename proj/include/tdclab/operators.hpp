#pragma once

#include <span>
#include <string>

#include "tdclab/linalg.hpp"
#include "tdclab/mdp.hpp"

namespace tdclab {

struct ExpectedOperators {
  Matrix A;  // E[rho phi (gamma phi' - phi)^T]
  Matrix B;  // -gamma E[rho phi' phi^T]
  Matrix C;  // -E[phi phi^T]
  Vector b;  // E[rho r phi]
};

struct SpectralParams {
  double lambda_theta = 0.0;  // lambda_max(2 A^T C^-1 A)
  double lambda_w = 0.0;      // lambda_max(2 C)
  double lambda_cm = 0.0;     // min |eig(C)|
};

struct Radii {
  double R_theta = 0.0;
  double R_w = 0.0;
};

// Everything the learner and the bound computations need about one instance.
struct ProblemData {
  Matrix A, B, C;
  Vector b;
  Matrix C_inv;
  Vector mu;
  Vector theta_star;
  double lambda_theta = 0.0;
  double lambda_w = 0.0;
  double lambda_cm = 0.0;
  double R_theta = 0.0;
  double R_w = 0.0;
  MixingEstimate mixing;

  // Instance scalars carried along for the bound formulas.
  double gamma = 0.0;
  double rho_max = 0.0;
  double r_max = 1.0;

  std::size_t dim() const noexcept { return b.size(); }
};

// Exact expectations as triple sums over (s, a, s') weighted by
// mu(s) * behavior(a|s) * P(s'|s,a). Throws SingularOperator when A or C has
// condition number above 1e12.
ExpectedOperators exact_operators(const Mdp& mdp, const PolicyPair& policies, const FeatureMap& features,
                                  std::span<const double> mu);

// Solves A theta = -b.
Vector optimal_theta(const Matrix& A, std::span<const double> b);

// J(theta) = (A theta + b)^T (-C)^-1 (A theta + b).
double mspbe(const ProblemData& pd, std::span<const double> theta);

// Fast time-scale fixed point -C^-1 (b + A theta).
Vector psi(const ProblemData& pd, std::span<const double> theta);

// Tight choices of lambda_theta and lambda_w plus lambda_cm. Throws
// NotNegativeDefinite if either lambda is >= 0.
SpectralParams spectral_params(const Matrix& A, const Matrix& B, const Matrix& C);

// R_theta = 2 max(||A|| ||b||, ||A^-1|| ||b||, ||theta*||), R_w = 2 ||C^-1|| ||A|| R_theta.
Radii projection_radii(const Matrix& A, std::span<const double> b, const Matrix& C_inv,
                       std::span<const double> theta_star);

// Full pipeline: behavior chain, stationary distribution, mixing fit, operators,
// theta*, spectral constants, radii.
ProblemData build_problem(const Instance& inst);

// JSON document emitted by `tdclab solve`.
std::string problem_to_json(const ProblemData& pd);

}  // namespace tdclab
