#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tdclab/linalg.hpp"
#include "tdclab/mdp.hpp"
#include "tdclab/operators.hpp"
#include "tdclab/tdc.hpp"

namespace tdclab {

// The TDC increments rewritten in terms of theta and the tracking error
// z = w - psi(theta):
//   f1 = (A_t - B_t C^-1 A) theta + (b_t - B_t C^-1 b),  g1 = B_t z
//   f2 = (A_t - C_t C^-1 A) theta + (b_t - C_t C^-1 b),  g2 = C_t z
// so that f1 + g1 = A_t theta + b_t + B_t w and f2 + g2 = A_t theta + b_t + C_t w.
struct HelperSplit {
  Vector f1, g1, f2, g2;
};

HelperSplit helper_split(std::span<const double> theta, std::span<const double> z, const Observation& obs,
                         const ProblemData& pd, const FeatureMap& features, double rho);

struct ConstantsTable {
  // Boundedness and Lipschitz constants of the split increments.
  double K_f1 = 0, K_g1 = 0, K_f2 = 0, K_g2 = 0;
  double K_r1 = 0, K_r2 = 0, K_r3 = 0;
  double L_f1_theta = 0, L_f2_theta = 0, L_f2_z = 0, L_g2_z = 0;
  // Mixing times for the stepsizes the table was built with.
  std::uint64_t tau_alpha = 0, tau_beta = 0;
  // Constant-stepsize bound.
  double C1 = 0, C2 = 0, C3 = 0, C4 = 0, C5 = 0, C6 = 0;
  std::uint64_t T = 0;
  // Stacked (theta, w) system.
  double eta = 0;
  double C_G = 0, C_g = 0, K_h = 0, L_h = 0, lambda_x = 0;
  double C7 = 0;
  bool stacked_valid = false;  // lambda_x < 0
};

// Closed forms for the K and L constants. c_alpha / c_beta only enter through
// max{1, c_alpha / c_beta}.
ConstantsTable lemma_constants(const ProblemData& pd, double r_max, double rho_max, double gamma, double c_alpha,
                               double c_beta);

// Least i with m * rho^i <= step.
std::uint64_t mixing_time(double m_hat, double rho_hat, double step);

// log_{1/rho}(m/rho) + ln(1/step)/ln(1/rho): the logarithmic upper bound on the
// mixing time.
double mixing_time_upper_bound(double m_hat, double rho_hat, double step);

// Piecewise rate envelope: t^-nu if sigma > 1.5 nu, else t^-(2(sigma-nu) - epsilon).
double envelope_h(double sigma, double nu, double t, double epsilon);

struct Theorem2Constants {
  double C1 = 0, C2 = 0, C3 = 0, C4 = 0, C5 = 0, C6 = 0;
  std::uint64_t T = 0;
};

// Constant-stepsize constants for alpha, beta (eta = alpha / beta). Throws
// InvalidArgument unless alpha < 1/|lambda_theta| and beta < 1/|lambda_w|.
Theorem2Constants theorem2_constants(const ProblemData& pd, const ConstantsTable& table, double m_hat, double rho_hat,
                                     double alpha, double beta, double z0_norm_sq);

// Which matrix sits in the lower-right block of the stacked system G.
//   kTdc:     G = [[A, B], [eta A, eta C]]  (matches the w-update)
//   kLiteral: G = [[A, B], [eta A, eta B]]  (as printed; singular by construction)
enum class StackedForm { kTdc, kLiteral };

struct StackedSystem {
  Matrix G;
  Vector g;
  double C_G = 0, C_g = 0, K_h = 0, L_h = 0, lambda_x = 0;
  Vector eigenvalues;  // spectrum of G + G^T, ascending
  bool valid = false;  // lambda_x < 0
};

StackedSystem stacked_system(const ProblemData& pd, double eta, StackedForm form = StackedForm::kTdc);

// (1/2) max{0, lambda_min(sym(C^-1 (A^T + A)))}.
double eta_lower_bound(const ProblemData& pd);

// C7 from the stacked-system constants and the mixing pair (m, rho).
double c7_constant(const StackedSystem& sys, double R_theta, double R_w, double m_hat, double rho_hat);

// Fills every field of the table: lemma constants, mixing times and the
// constant-stepsize bound for (alpha, beta), the stacked system for eta, C7.
ConstantsTable full_constants(const ProblemData& pd, double alpha, double beta, double eta,
                              StackedForm form = StackedForm::kTdc);

struct BlockwisePlan {
  std::vector<Block> blocks;
  double eta = 1.0;
  std::vector<double> eps_schedule;  // eps_0 .. eps_S
  std::size_t S = 0;

  Blockwise schedule() const { return {blocks, eta}; }
};

// Largest alpha with max{alpha ln(1/alpha), alpha} <= bound (64 bisection steps).
double largest_feasible_alpha(double bound);

// ceil(log_{1/(1 - |lambda_x| alpha)} 4), at least 1.
std::uint64_t block_length(double abs_lambda_x, double alpha);

// Plan from raw quantities: eps_0, the target, C7, |lambda_x| and eta.
BlockwisePlan plan_blocks(double eps0, double eps_target, double C7, double abs_lambda_x, double eta);

struct PlanOptions {
  bool eps_unsquared = false;  // eps_0 = ||theta_0 - theta*|| instead of its square
  // Replace the computed constants (a tuned plan); <= 0 keeps the table value.
  double lambda_x_override = 0.0;
  double C7_override = 0.0;
};

// Throws NotNegativeDefinite if the table's lambda_x >= 0 (and no override is
// given), InvalidArgument if eta is below its lower bound, PlanInfeasible if a
// block stepsize drops below 1e-15.
BlockwisePlan blockwise_plan(const ProblemData& pd, const ConstantsTable& table, double eps_target, double eta,
                             std::span<const double> theta0, const PlanOptions& options = {});

enum class BallSampling { kInterior, kSurface };

struct BoundCheck {
  std::string name;
  double bound = 0;
  double max_observed = 0;
  std::size_t violations = 0;
};

struct BoundednessReport {
  std::size_t samples = 0;
  std::vector<BoundCheck> checks;  // f1, g1, f2, g2

  std::size_t total_violations() const;
};

// theta uniform in the R_theta ball (or on its surface), z likewise in the
// R_w ball, observations from one behavior trajectory.
BoundednessReport check_boundedness(const Instance& inst, const ProblemData& pd, const ConstantsTable& table,
                                    std::size_t n_samples, std::uint64_t seed,
                                    BallSampling sampling = BallSampling::kInterior);

// JSON document emitted by `tdclab constants`, one {value, source} per entry.
std::string constants_to_json(const ConstantsTable& table);

}  // namespace tdclab
