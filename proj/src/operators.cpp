#include "tdclab/operators.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "tdclab/errors.hpp"

namespace tdclab {

ExpectedOperators exact_operators(const Mdp& mdp, const PolicyPair& policies, const FeatureMap& features,
                                  std::span<const double> mu) {
  const std::size_t ns = mdp.n_states, na = mdp.n_actions, d = features.dim();
  require(mu.size() == ns, "stationary distribution has wrong length");
  require(features.phi.rows() == ns, "feature matrix has wrong number of rows");

  ExpectedOperators op{Matrix(d, d), Matrix(d, d), Matrix(d, d), Vector(d, 0.0)};
  Vector diff(d);
  for (std::size_t s = 0; s < ns; ++s) {
    if (mu[s] == 0.0) continue;
    const auto phi = features(s);
    for (std::size_t a = 0; a < na; ++a) {
      const double pa = mu[s] * policies.behavior(s, a);
      const double rho = policies.rho(s, a);
      const auto row = mdp.row(s, a);
      for (std::size_t next = 0; next < ns; ++next) {
        const double w = pa * row[next];
        if (w == 0.0) continue;
        const auto phi_next = features(next);
        for (std::size_t k = 0; k < d; ++k) diff[k] = mdp.gamma * phi_next[k] - phi[k];
        for (std::size_t i = 0; i < d; ++i) {
          const double wi = w * phi[i];
          const double wri = wi * rho;
          const double wrn = -mdp.gamma * w * rho * phi_next[i];
          auto arow = op.A.row(i);
          auto brow = op.B.row(i);
          auto crow = op.C.row(i);
          for (std::size_t j = 0; j < d; ++j) {
            arow[j] += wri * diff[j];
            brow[j] += wrn * phi[j];
            crow[j] -= wi * phi[j];
          }
          op.b[i] += wri * mdp.reward[s];
        }
      }
    }
  }
  // Exact symmetry for C.
  op.C = symmetrized(op.C);

  if (condition_number(op.A) > 1e12) fail(ErrorKind::kSingularOperator, "A is numerically singular");
  if (condition_number(op.C) > 1e12) fail(ErrorKind::kSingularOperator, "C is numerically singular");
  return op;
}

Vector optimal_theta(const Matrix& A, std::span<const double> b) { return solve(A, scaled(b, -1.0)); }

double mspbe(const ProblemData& pd, std::span<const double> theta) {
  const Vector residual = add(pd.A * theta, pd.b);
  const Vector y = pd.C_inv * residual;  // C^-1 r, so -r^T C^-1 r = r^T (-C)^-1 r
  return std::max(0.0, -dot(residual, y));
}

Vector psi(const ProblemData& pd, std::span<const double> theta) {
  const Vector rhs = add(pd.A * theta, pd.b);
  return scaled(pd.C_inv * rhs, -1.0);
}

SpectralParams spectral_params(const Matrix& A, const Matrix& /*B*/, const Matrix& C) {
  require(A.square() && C.square() && A.rows() == C.rows(), "spectral_params: shape mismatch");
  const Matrix C_inv = inverse(symmetrized(C));
  const Matrix M = 2.0 * (A.transpose() * C_inv * A);
  const Vector ev_theta = symmetric_eigenvalues(symmetrized(M));
  const Vector ev_c = symmetric_eigenvalues(symmetrized(C));

  SpectralParams sp;
  sp.lambda_theta = ev_theta.back();
  sp.lambda_w = 2.0 * ev_c.back();
  sp.lambda_cm = std::abs(ev_c.front());
  for (double v : ev_c) sp.lambda_cm = std::min(sp.lambda_cm, std::abs(v));
  if (sp.lambda_theta >= 0.0) fail(ErrorKind::kNotNegativeDefinite, "lambda_max(2 A^T C^-1 A) >= 0");
  if (sp.lambda_w >= 0.0) fail(ErrorKind::kNotNegativeDefinite, "lambda_max(2 C) >= 0");
  return sp;
}

Radii projection_radii(const Matrix& A, std::span<const double> b, const Matrix& C_inv,
                       std::span<const double> theta_star) {
  const double norm_A = spectral_norm(A);
  const double norm_A_inv = spectral_norm(inverse(A));
  const double norm_C_inv = spectral_norm(C_inv);
  const double norm_b = norm2(b);
  Radii r;
  r.R_theta = 2.0 * std::max({norm_A * norm_b, norm_A_inv * norm_b, norm2(theta_star)});
  // b = 0 puts theta* at the origin; any positive radius works.
  if (r.R_theta == 0.0) r.R_theta = 1.0;
  r.R_w = 2.0 * norm_C_inv * norm_A * r.R_theta;
  return r;
}

ProblemData build_problem(const Instance& inst) {
  const Matrix P = induced_chain(inst.mdp, inst.policies.behavior);
  ProblemData pd;
  pd.mu = stationary_distribution(P);
  pd.mixing = mixing_constants(P, pd.mu);
  ExpectedOperators op = exact_operators(inst.mdp, inst.policies, inst.features, pd.mu);
  pd.A = std::move(op.A);
  pd.B = std::move(op.B);
  pd.C = std::move(op.C);
  pd.b = std::move(op.b);
  pd.C_inv = symmetrized(inverse(pd.C));
  pd.theta_star = optimal_theta(pd.A, pd.b);
  const SpectralParams sp = spectral_params(pd.A, pd.B, pd.C);
  pd.lambda_theta = sp.lambda_theta;
  pd.lambda_w = sp.lambda_w;
  pd.lambda_cm = sp.lambda_cm;
  const Radii r = projection_radii(pd.A, pd.b, pd.C_inv, pd.theta_star);
  pd.R_theta = r.R_theta;
  pd.R_w = r.R_w;
  pd.gamma = inst.mdp.gamma;
  pd.rho_max = inst.policies.rho_max;
  pd.r_max = inst.mdp.r_max;
  return pd;
}

std::string problem_to_json(const ProblemData& pd) {
  using nlohmann::json;
  auto mat = [](const Matrix& m) {
    json rows = json::array();
    for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(Vector(m.row(r).begin(), m.row(r).end()));
    return rows;
  };
  json j;
  j["A"] = mat(pd.A);
  j["B"] = mat(pd.B);
  j["C"] = mat(pd.C);
  j["b"] = pd.b;
  j["theta_star"] = pd.theta_star;
  j["lambda_theta"] = pd.lambda_theta;
  j["lambda_w"] = pd.lambda_w;
  j["lambda_cm"] = pd.lambda_cm;
  j["R_theta"] = pd.R_theta;
  j["R_w"] = pd.R_w;
  j["rho_max"] = pd.rho_max;
  j["m_hat"] = pd.mixing.m_hat;
  j["rho_hat"] = pd.mixing.rho_hat;
  return j.dump(2);
}

}  // namespace tdclab
