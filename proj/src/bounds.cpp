#include "tdclab/bounds.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>

#include "json.hpp"
#include "tdclab/errors.hpp"

namespace tdclab {

HelperSplit helper_split(std::span<const double> theta, std::span<const double> z, const Observation& obs,
                         const ProblemData& pd, const FeatureMap& features, double rho) {
  const SampleMatrices m = per_sample_matrices(obs, features, rho, pd.gamma);
  // u = C^-1 (A theta + b): the offset between w and z.
  const Vector u = pd.C_inv * add(pd.A * theta, pd.b);
  const Vector At_theta_bt = add(m.A * theta, m.b);

  HelperSplit h;
  h.f1 = sub(At_theta_bt, m.B * u);
  h.g1 = m.B * z;
  h.f2 = sub(At_theta_bt, m.C * u);
  h.g2 = m.C * z;

#ifndef NDEBUG
  const Vector w = sub(z, u);
  const Vector lhs1 = add(h.f1, h.g1), rhs1 = add(At_theta_bt, m.B * w);
  const Vector lhs2 = add(h.f2, h.g2), rhs2 = add(At_theta_bt, m.C * w);
  const double scale = 1.0 + max_abs(rhs1) + max_abs(rhs2) + max_abs(u) + max_abs(z);
  assert(max_abs(sub(lhs1, rhs1)) <= 1e-10 * scale);
  assert(max_abs(sub(lhs2, rhs2)) <= 1e-10 * scale);
#endif
  return h;
}

ConstantsTable lemma_constants(const ProblemData& pd, double r_max, double rho_max, double gamma, double c_alpha,
                               double c_beta) {
  require(c_alpha > 0.0 && c_beta > 0.0, "lemma_constants needs positive stepsize scales");
  require(pd.lambda_cm > 0.0 && pd.R_theta > 0.0 && pd.R_w > 0.0, "problem data lacks spectral or radius fields");
  const double inv_cm = 1.0 / pd.lambda_cm;
  const double Rt = pd.R_theta, Rw = pd.R_w;
  const double ratio = std::max(1.0, c_alpha / c_beta);

  ConstantsTable k;
  // ||A_t|| <= (1+gamma) rho_max, ||B_t|| <= gamma rho_max, ||C_t|| <= 1,
  // ||b_t|| <= rho_max r_max, ||C^-1|| = 1/lambda_cm. The theta term carries R_theta.
  k.K_f1 = ((1 + gamma) * rho_max + inv_cm * gamma * (1 + gamma) * rho_max * rho_max) * Rt + rho_max * r_max +
           inv_cm * gamma * rho_max * rho_max * r_max;
  k.K_g1 = 2 * gamma * rho_max * Rw;
  k.K_f2 = ((1 + gamma) * rho_max + inv_cm * (1 + gamma) * rho_max) * Rt + rho_max * r_max + inv_cm * rho_max * r_max;
  k.K_g2 = 2 * Rw;
  k.K_r1 = spectral_norm(pd.C_inv) * spectral_norm(pd.A) * (k.K_f1 + k.K_g1);
  k.K_r2 = k.K_f2 + k.K_g2 + ratio * (1 + gamma) * rho_max * inv_cm * (k.K_f1 + k.K_g1);
  k.L_f2_theta = 2 * Rw * ((1 + gamma) * rho_max + inv_cm * (1 + gamma) * rho_max);
  k.L_f2_z = 2 * k.K_f2;
  k.L_g2_z = 4 * Rw + 2 * k.K_g2;
  k.K_r3 = ratio * k.L_f2_theta * (k.K_f1 + k.K_g1) + k.L_f2_z * k.K_r2;
  k.L_f1_theta = 4 * Rt * (1 + gamma) * rho_max * (1 + gamma * rho_max * inv_cm) + 2 * k.K_f1;
  return k;
}

std::uint64_t mixing_time(double m_hat, double rho_hat, double step) {
  if (!(rho_hat > 0.0 && rho_hat < 1.0)) fail(ErrorKind::kInvalidArgument, "rho_hat must lie in (0,1)");
  require(step > 0.0 && m_hat > 0.0, "mixing_time needs positive m_hat and step");
  if (m_hat <= step) return 0;
  double guess = std::ceil(std::log(m_hat / step) / std::log(1.0 / rho_hat));
  auto i = static_cast<std::uint64_t>(std::max(0.0, guess));
  // Settle rounding at exact powers against the defining inequality.
  while (i > 0 && m_hat * std::pow(rho_hat, double(i - 1)) <= step) --i;
  while (m_hat * std::pow(rho_hat, double(i)) > step) ++i;
  return i;
}

double mixing_time_upper_bound(double m_hat, double rho_hat, double step) {
  const double log_inv_rho = std::log(1.0 / rho_hat);
  return std::log(m_hat / rho_hat) / log_inv_rho + std::log(1.0 / step) / log_inv_rho;
}

double envelope_h(double sigma, double nu, double t, double epsilon) {
  require(nu > 0.0 && nu < sigma && sigma <= 1.0, "envelope_h needs 0 < nu < sigma <= 1");
  require(epsilon > 0.0 && epsilon <= sigma - nu, "envelope_h needs epsilon in (0, sigma - nu]");
  require(t >= 1.0, "envelope_h needs t >= 1");
  if (sigma > 1.5 * nu) return std::pow(t, -nu);
  return std::pow(t, -(2.0 * (sigma - nu) - epsilon));
}

namespace {

double log_factor(double x) { return std::max(x, x * std::log(1.0 / x)); }

// log_{1/rho}(m/rho) + 1/ln(1/rho)
double mixing_log_term(double m_hat, double rho_hat) {
  const double l = std::log(1.0 / rho_hat);
  return std::log(m_hat / rho_hat) / l + 1.0 / l;
}

}  // namespace

Theorem2Constants theorem2_constants(const ProblemData& pd, const ConstantsTable& k, double m_hat, double rho_hat,
                                     double alpha, double beta, double z0_norm_sq) {
  const double lt = std::abs(pd.lambda_theta), lw = std::abs(pd.lambda_w);
  if (!(alpha > 0.0 && alpha < 1.0 / lt)) fail(ErrorKind::kInvalidArgument, "need 0 < alpha < 1/|lambda_theta|");
  if (!(beta > 0.0 && beta < 1.0 / lw)) fail(ErrorKind::kInvalidArgument, "need 0 < beta < 1/|lambda_w|");
  if (!(rho_hat > 0.0 && rho_hat < 1.0)) fail(ErrorKind::kInvalidArgument, "rho_hat must lie in (0,1)");
  const double g = pd.gamma, rm = pd.rho_max, Rt = pd.R_theta, Rw = pd.R_w;
  const double mix = mixing_log_term(m_hat, rho_hat);

  Theorem2Constants c;
  c.C5 = 2 * (k.K_r3 + k.L_g2_z * k.K_r2) / lw * mix +
         (16 * Rw * (k.K_f2 + k.K_g2) + 3 * (k.K_f2 * k.K_f2 + k.K_g2 * k.K_g2) + 3 * k.K_r1 * k.K_r1) / lw;
  c.C6 = 2 * (1 + g) * rm * Rw * (k.K_g1 + k.K_f1) / (lw * pd.lambda_cm);
  c.C2 = 2 * k.L_f1_theta * (k.K_f1 + k.K_g1) / lt * mix +
         2 * (8 * Rt * k.K_f1 + k.K_f1 * k.K_f1 + k.K_g1 * k.K_g1) / lt;
  const double q = (g * rm * Rt / lt) * (g * rm * Rt / lt);
  c.C3 = 32 * q * c.C5;
  c.C4 = 16 * q * c.C6;

  if (z0_norm_sq > 0.0) {
    const double x = std::log(c.C5 * log_factor(beta) / z0_norm_sq) / -std::log(1 - lw * beta);
    c.T = static_cast<std::uint64_t>(std::ceil(std::max(0.0, x)));
  }
  const double decay = std::pow(1 - lt * alpha, double(c.T) + 1);
  c.C1 = 4 * g * rm * Rt * Rw * (1 - decay) / (lt * decay);
  return c;
}

StackedSystem stacked_system(const ProblemData& pd, double eta, StackedForm form) {
  require(eta > 0.0, "eta must be positive");
  const std::size_t d = pd.dim();
  const Matrix& lower_right = form == StackedForm::kTdc ? pd.C : pd.B;
  StackedSystem sys;
  sys.G = Matrix(2 * d, 2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      sys.G(i, j) = pd.A(i, j);
      sys.G(i, d + j) = pd.B(i, j);
      sys.G(d + i, j) = eta * pd.A(i, j);
      sys.G(d + i, d + j) = eta * lower_right(i, j);
    }
  }
  sys.g.resize(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    sys.g[i] = pd.b[i];
    sys.g[d + i] = eta * pd.b[i];
  }
  const double radius = std::hypot(pd.R_theta, pd.R_w);
  sys.C_G = spectral_norm(sys.G);
  sys.C_g = norm2(sys.g);
  sys.K_h = sys.C_G * radius + sys.C_g;
  sys.L_h = 4 * sys.C_G * radius + 2 * sys.K_h;
  sys.eigenvalues = symmetric_eigenvalues(sys.G + sys.G.transpose());
  sys.lambda_x = sys.eigenvalues.back();
  sys.valid = sys.lambda_x < 0.0;
  return sys;
}

double eta_lower_bound(const ProblemData& pd) {
  const Matrix M = pd.C_inv * (pd.A.transpose() + pd.A);
  const double lmin = symmetric_eigenvalues(symmetrized(M)).front();
  return 0.5 * std::max(0.0, lmin);
}

double c7_constant(const StackedSystem& sys, double R_theta, double R_w, double m_hat, double rho_hat) {
  const double radius = std::hypot(R_theta, R_w);
  const double l = std::log(1.0 / rho_hat);
  const double lk = sys.L_h * sys.K_h;
  return 2.0 / std::abs(sys.lambda_x) *
         (8 * sys.K_h * radius + lk * std::log(m_hat / rho_hat) / l + lk / l + 0.5 * sys.K_h * sys.K_h);
}

ConstantsTable full_constants(const ProblemData& pd, double alpha, double beta, double eta, StackedForm form) {
  ConstantsTable k = lemma_constants(pd, pd.r_max, pd.rho_max, pd.gamma, alpha, beta);
  const double m = pd.mixing.m_hat, r = pd.mixing.rho_hat;
  k.tau_alpha = mixing_time(m, r, alpha);
  k.tau_beta = mixing_time(m, r, beta);

  const double lt = std::abs(pd.lambda_theta), lw = std::abs(pd.lambda_w);
  if (alpha < 1.0 / lt && beta < 1.0 / lw) {
    const double z0 = norm2_sq(psi(pd, Vector(pd.dim(), 0.0)));
    const Theorem2Constants c = theorem2_constants(pd, k, m, r, alpha, beta, z0);
    k.C1 = c.C1, k.C2 = c.C2, k.C3 = c.C3, k.C4 = c.C4, k.C5 = c.C5, k.C6 = c.C6, k.T = c.T;
  }

  const StackedSystem sys = stacked_system(pd, eta, form);
  k.eta = eta;
  k.C_G = sys.C_G, k.C_g = sys.C_g, k.K_h = sys.K_h, k.L_h = sys.L_h, k.lambda_x = sys.lambda_x;
  k.stacked_valid = sys.valid;
  if (sys.valid) k.C7 = c7_constant(sys, pd.R_theta, pd.R_w, m, r);
  return k;
}

double largest_feasible_alpha(double bound) {
  if (!(bound > 0.0)) return 0.0;
  constexpr double kInvE = 1.0 / std::numbers::e;
  // max{a ln(1/a), a} is increasing and equals a for a >= 1/e.
  if (bound >= kInvE) return bound;
  auto phi = [](double a) { return std::max(a * std::log(1.0 / a), a); };
  double lo = std::log(1e-300), hi = std::log(kInvE);
  if (phi(std::exp(lo)) > bound) return 0.0;
  for (int i = 0; i < 64; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (phi(std::exp(mid)) <= bound)
      lo = mid;
    else
      hi = mid;
  }
  return std::exp(lo);
}

std::uint64_t block_length(double abs_lambda_x, double alpha) {
  const double c = abs_lambda_x * alpha;
  require(c > 0.0 && c <= 1.0, "block_length needs 0 < |lambda_x| alpha <= 1");
  if (c == 1.0) return 1;
  const double len = std::ceil(std::log(4.0) / -std::log1p(-c));
  return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(len));
}

BlockwisePlan plan_blocks(double eps0, double eps_target, double C7, double abs_lambda_x, double eta) {
  require(eps_target > 0.0, "eps_target must be positive");
  require(C7 > 0.0 && abs_lambda_x > 0.0 && eta > 0.0, "plan needs positive C7, |lambda_x| and eta");
  require(eps0 >= 0.0, "eps0 must be nonnegative");
  BlockwisePlan plan;
  plan.eta = eta;
  plan.S = eps0 > eps_target ? static_cast<std::size_t>(std::ceil(std::log2(eps0 / eps_target))) : 0;
  for (std::size_t s = 0; s <= plan.S; ++s) plan.eps_schedule.push_back(std::ldexp(eps0, -static_cast<int>(s)));
  for (std::size_t s = 1; s <= plan.S; ++s) {
    const double bound = std::min(plan.eps_schedule[s - 1] / (4.0 * C7), 1.0 / abs_lambda_x);
    const double alpha = largest_feasible_alpha(bound);
    if (alpha < 1e-15)
      fail(ErrorKind::kPlanInfeasible, "block " + std::to_string(s) + " needs alpha below 1e-15");
    if (!plan.blocks.empty() && alpha >= plan.blocks.back().alpha)
      fail(ErrorKind::kPlanInfeasible,
           "the 1/|lambda_x| cap binds in consecutive blocks; alphas would not decrease");
    plan.blocks.push_back({alpha, eta * alpha, block_length(abs_lambda_x, alpha)});
  }
  return plan;
}

BlockwisePlan blockwise_plan(const ProblemData& pd, const ConstantsTable& table, double eps_target, double eta,
                             std::span<const double> theta0, const PlanOptions& options) {
  require(theta0.size() == pd.dim(), "theta0 has wrong length");
  const double eta_min = eta_lower_bound(pd);
  if (eta < eta_min)
    fail(ErrorKind::kInvalidArgument, "eta = " + std::to_string(eta) + " is below its lower bound " +
                                          std::to_string(eta_min));

  double lambda_x = table.lambda_x;
  double C7 = table.C7;
  bool valid = table.stacked_valid;
  if (table.eta != eta) {
    const StackedSystem sys = stacked_system(pd, eta);
    lambda_x = sys.lambda_x;
    valid = sys.valid;
    C7 = valid ? c7_constant(sys, pd.R_theta, pd.R_w, pd.mixing.m_hat, pd.mixing.rho_hat) : 0.0;
  }
  if (options.lambda_x_override > 0.0) {
    lambda_x = -options.lambda_x_override;
    valid = true;
  }
  if (!valid)
    fail(ErrorKind::kNotNegativeDefinite,
         "lambda_max(G + G^T) = " + std::to_string(lambda_x) + " >= 0 for eta = " + std::to_string(eta));
  if (options.C7_override > 0.0) C7 = options.C7_override;
  if (!(C7 > 0.0)) fail(ErrorKind::kPlanInfeasible, "C7 is not positive");

  const double dist = norm2(sub(theta0, pd.theta_star));
  const double eps0 = options.eps_unsquared ? dist : dist * dist;
  return plan_blocks(eps0, eps_target, C7, std::abs(lambda_x), eta);
}

std::size_t BoundednessReport::total_violations() const {
  std::size_t n = 0;
  for (const auto& c : checks) n += c.violations;
  return n;
}

namespace {

Vector sample_ball(Rng& rng, std::size_t d, double R, BallSampling sampling) {
  Vector x(d);
  for (double& v : x) v = rng.normal();
  const double n = norm2(x);
  const double radius = sampling == BallSampling::kSurface ? R : R * std::pow(rng.uniform(), 1.0 / double(d));
  for (double& v : x) v *= radius / n;
  return x;
}

}  // namespace

BoundednessReport check_boundedness(const Instance& inst, const ProblemData& pd, const ConstantsTable& table,
                                    std::size_t n_samples, std::uint64_t seed, BallSampling sampling) {
  require(n_samples >= 1, "check_boundedness needs at least one sample");
  BoundednessReport report;
  report.samples = n_samples;
  report.checks = {{"K_f1", table.K_f1}, {"K_g1", table.K_g1}, {"K_f2", table.K_f2}, {"K_g2", table.K_g2}};

  const TrajectorySampler sampler(inst.mdp, inst.policies);
  Rng traj_rng(split_seed(seed, 0));
  Rng ball_rng(split_seed(seed, 1));
  std::size_t s = static_cast<std::size_t>(traj_rng.below(inst.mdp.n_states));
  const std::size_t d = pd.dim();
  for (std::size_t i = 0; i < n_samples; ++i) {
    const Observation obs = sampler.step(s, traj_rng);
    s = obs.s_next;
    const Vector theta = sample_ball(ball_rng, d, pd.R_theta, sampling);
    const Vector z = sample_ball(ball_rng, d, pd.R_w, sampling);
    const HelperSplit h = helper_split(theta, z, obs, pd, inst.features, inst.policies.rho(obs.s, obs.a));
    const double norms[4] = {norm2(h.f1), norm2(h.g1), norm2(h.f2), norm2(h.g2)};
    for (std::size_t k = 0; k < 4; ++k) {
      auto& c = report.checks[k];
      c.max_observed = std::max(c.max_observed, norms[k]);
      if (norms[k] > c.bound) ++c.violations;
    }
  }
  return report;
}

std::string constants_to_json(const ConstantsTable& k) {
  using nlohmann::json;
  json j;
  auto put = [&](const char* name, double value, const char* source) {
    j[name] = {{"value", value}, {"source", source}};
  };
  put("K_f1", k.K_f1, "f1 boundedness lemma: ||f1(theta,O)|| over the R_theta ball");
  put("K_g1", k.K_g1, "g1 boundedness lemma: ||g1(z,O)|| = ||B_t z||");
  put("K_f2", k.K_f2, "f2 boundedness lemma: ||f2(theta,O)|| over the R_theta ball");
  put("K_g2", k.K_g2, "g2 boundedness lemma: ||g2(z,O)|| = ||C_t z||");
  put("K_r1", k.K_r1, "slow-drift bound: ||C^-1|| ||A|| (K_f1 + K_g1)");
  put("K_r2", k.K_r2, "tracking-error increment bound: ||z_{i+1} - z_i|| <= beta_i K_r2");
  put("K_r3", k.K_r3, "f2 bias lemma: combined Lipschitz drift constant");
  put("L_f1_theta", k.L_f1_theta, "f1 bias Lipschitz lemma (theta)");
  put("L_f2_theta", k.L_f2_theta, "f2 bias Lipschitz lemma (theta)");
  put("L_f2_z", k.L_f2_z, "f2 bias Lipschitz lemma (z)");
  put("L_g2_z", k.L_g2_z, "g2 bias Lipschitz lemma (z)");
  put("tau_alpha", double(k.tau_alpha), "mixing time: min{i : m rho^i <= alpha}");
  put("tau_beta", double(k.tau_beta), "mixing time: min{i : m rho^i <= beta}");
  put("C1", k.C1, "constant-stepsize theorem: transient constant C1");
  put("C2", k.C2, "constant-stepsize theorem: training bias/variance constant C2");
  put("C3", k.C3, "constant-stepsize theorem: 32 (gamma rho_max R_theta / |lambda_theta|)^2 C5");
  put("C4", k.C4, "constant-stepsize theorem: 16 (gamma rho_max R_theta / |lambda_theta|)^2 C6");
  put("C5", k.C5, "constant-stepsize theorem: tracking bias/variance constant C5");
  put("C6", k.C6, "constant-stepsize theorem: slow-drift constant C6");
  put("T", double(k.T), "constant-stepsize theorem: burn-in horizon T");
  put("eta", k.eta, "stacked system: beta / alpha");
  put("C_G", k.C_G, "stacked system: ||G||");
  put("C_g", k.C_g, "stacked system: ||g||");
  put("K_h", k.K_h, "stacked system: C_G sqrt(R_theta^2 + R_w^2) + C_g");
  put("L_h", k.L_h, "stacked system: 4 C_G sqrt(R_theta^2 + R_w^2) + 2 K_h");
  put("lambda_x", k.lambda_x, "stacked system: lambda_max(G + G^T)");
  put("C7", k.C7, "blockwise theorem: block noise constant C7 (0 when lambda_x >= 0)");
  j["stacked_valid"] = k.stacked_valid;
  return j.dump(2);
}

}  // namespace tdclab
