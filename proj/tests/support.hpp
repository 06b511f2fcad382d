#pragma once

// Shared fixtures and reference implementations for the unit tests.

#include <cmath>
#include <cstdint>
#include <optional>

#include "tdclab/errors.hpp"
#include "tdclab/linalg.hpp"
#include "tdclab/mdp.hpp"
#include "tdclab/operators.hpp"
#include "tdclab/rng.hpp"
#include "tdclab/tdc.hpp"

namespace tdclab::fixtures {

// Kind of the tdclab::Error thrown by f; std::nullopt if nothing was thrown.
template <class F>
std::optional<ErrorKind> kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline Instance reference_instance() { return generate_garnet({20, 4, 5, 6, 42}); }

inline Instance desk_instance() { return generate_garnet({50, 5, 10, 8, 2019}); }

// Cached so every test does not rebuild the same problem.
inline const Instance& reference() {
  static const Instance inst = reference_instance();
  return inst;
}

inline const ProblemData& reference_problem() {
  static const ProblemData pd = build_problem(reference());
  return pd;
}

inline Vector random_vector(Rng& rng, std::size_t d, double scale = 1.0) {
  Vector v(d);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

inline Vector random_in_ball(Rng& rng, std::size_t d, double R) {
  Vector v = random_vector(rng, d);
  const double r = R * std::pow(rng.uniform(), 1.0 / double(d)) / norm2(v);
  for (double& x : v) x *= r;
  return v;
}

// The textbook update with dense per-sample matrices.
inline TdcState dense_step(const TdcState& s, const Observation& obs, StepSizes step, double rho,
                           const FeatureMap& features, double gamma, double R_theta, double R_w) {
  const SampleMatrices m = per_sample_matrices(obs, features, rho, gamma);
  const Vector common = add(m.A * s.theta, m.b);
  TdcState out = s;
  out.theta = project_ball(add(s.theta, scaled(add(common, m.B * s.w), step.alpha)), R_theta);
  out.w = project_ball(add(s.w, scaled(add(common, m.C * s.w), step.beta)), R_w);
  out.t = s.t + 1;
  return out;
}

inline double relative_frobenius(const Matrix& estimate, const Matrix& exact) {
  return frobenius_norm(estimate - exact) / frobenius_norm(exact);
}

}  // namespace tdclab::fixtures
