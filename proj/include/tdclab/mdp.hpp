#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tdclab/linalg.hpp"
#include "tdclab/rng.hpp"

namespace tdclab {

// Finite MDP with a state-dependent reward. transition(s, a, s') is stored
// densely as one n_states x n_states block per action.
struct Mdp {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::vector<double> transition;  // [s][a][s']
  Vector reward;                   // [s]
  double gamma = 0.95;
  double r_max = 1.0;

  double p(std::size_t s, std::size_t a, std::size_t next) const {
    return transition[(s * n_actions + a) * n_states + next];
  }
  std::span<const double> row(std::size_t s, std::size_t a) const {
    return {transition.data() + (s * n_actions + a) * n_states, n_states};
  }

  // Throws InvalidArgument on any broken invariant.
  void validate() const;
};

struct PolicyPair {
  Matrix behavior;  // [s][a]
  Matrix target;    // [s][a]
  Matrix rho;       // target / behavior
  double rho_max = 0.0;

  static PolicyPair make(Matrix behavior, Matrix target);
  void validate(std::size_t n_states, std::size_t n_actions) const;
};

struct FeatureMap {
  Matrix phi;  // [s][k]

  std::size_t dim() const noexcept { return phi.cols(); }
  std::span<const double> operator()(std::size_t s) const { return phi.row(s); }
  void validate(std::size_t n_states) const;
};

struct Observation {
  std::size_t s = 0;
  std::size_t a = 0;
  double r = 0.0;
  std::size_t s_next = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

struct MixingEstimate {
  double m_hat = 1.0;
  double rho_hat = 0.5;
  std::size_t horizon = 0;
  Vector tv_curve;  // tv_curve[t] = max_s TV(P^t(s,.), mu), t = 0..horizon
};

struct GarnetParams {
  std::size_t n_states = 0;
  std::size_t n_actions = 0;
  std::size_t branching = 0;
  std::size_t features = 0;
  std::uint64_t seed = 0;
  double gamma = 0.95;
};

// A complete evaluation problem: dynamics, both policies, and features.
struct Instance {
  Mdp mdp;
  PolicyPair policies;
  FeatureMap features;
  GarnetParams generator;

  void validate() const;
};

// Garnet G(n_states, n_actions, branching, features). Regenerates with a
// perturbed seed (up to 16 retries) when the features are rank deficient or the
// behavior chain is not ergodic.
Instance generate_garnet(const GarnetParams& params);

// P[s][s'] = sum_a transition[s][a][s'] * policy[s][a].
Matrix induced_chain(const Mdp& mdp, const Matrix& policy);

// Irreducible and aperiodic, judged from the support of P.
bool is_ergodic(const Matrix& P);

// Power iteration from the uniform vector until ||mu P - mu||_1 <= 1e-12.
Vector stationary_distribution(const Matrix& P, std::size_t max_iter = 1'000'000);

MixingEstimate mixing_constants(const Matrix& P, std::span<const double> mu, double tol = 1e-8,
                                std::size_t horizon_cap = 100'000);

// a ~ behavior[s], s' ~ transition[s][a], r = reward[s]. Consumes exactly two
// uniforms from rng.
Observation sample_step(const Mdp& mdp, const PolicyPair& policies, std::size_t s, Rng& rng);

// Precomputed cumulative tables over the support of each row; produces the
// same observation stream as sample_step for the same rng.
class TrajectorySampler {
 public:
  TrajectorySampler(const Mdp& mdp, const PolicyPair& policies);

  Observation step(std::size_t s, Rng& rng) const;

 private:
  struct Row {
    std::vector<std::uint32_t> index;
    std::vector<double> cumulative;
    std::size_t pick(double u) const;
  };
  const Mdp* mdp_;
  std::vector<Row> action_rows_;      // per state
  std::vector<Row> transition_rows_;  // per (state, action)
};

// Rank of the feature matrix, via the Gram spectrum.
std::size_t feature_rank(const Matrix& phi, double rel_tol = 1e-10);

// JSON round trip (17 significant digits).
std::string instance_to_json(const Instance& inst);
Instance instance_from_json(const std::string& text);
void save_instance(const Instance& inst, const std::filesystem::path& path);
Instance load_instance(const std::filesystem::path& path);

}  // namespace tdclab
