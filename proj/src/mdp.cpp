#include "tdclab/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <queue>
#include <sstream>

#include "json.hpp"
#include "tdclab/errors.hpp"

namespace tdclab {

namespace {

constexpr double kRowTol = 1e-12;
constexpr int kMaxRetries = 16;

void check_stochastic_row(std::span<const double> row, const std::string& what) {
  double sum = 0.0;
  for (double v : row) {
    require(v >= 0.0 && std::isfinite(v), what + " has a negative or non-finite entry");
    sum += v;
  }
  require(std::abs(sum - 1.0) <= kRowTol, what + " does not sum to 1");
}

Vector dirichlet_row(Rng& rng, std::size_t k) {
  Vector row(k);
  double sum = 0.0;
  for (double& v : row) {
    v = rng.exponential();
    sum += v;
  }
  for (double& v : row) v /= sum;
  return row;
}

// Inverse-CDF pick over a dense row. Falls back to the last positive entry
// when rounding leaves u above the accumulated mass.
std::size_t pick_dense(std::span<const double> row, double u) {
  double cum = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (row[i] <= 0.0) continue;
    cum += row[i];
    last = i;
    if (u < cum) return i;
  }
  return last;
}

Instance generate_once(const GarnetParams& params, std::uint64_t seed) {
  const std::size_t ns = params.n_states, na = params.n_actions;
  Rng rng(seed);
  Instance inst;
  inst.generator = params;
  Mdp& mdp = inst.mdp;
  mdp.n_states = ns;
  mdp.n_actions = na;
  mdp.gamma = params.gamma;
  mdp.r_max = 1.0;
  mdp.transition.assign(ns * na * ns, 0.0);

  std::vector<std::size_t> pool(ns);
  Vector cuts(params.branching + 1);
  for (std::size_t s = 0; s < ns; ++s) {
    for (std::size_t a = 0; a < na; ++a) {
      std::iota(pool.begin(), pool.end(), 0);
      for (std::size_t k = 0; k < params.branching; ++k) {
        const std::size_t j = k + rng.below(ns - k);
        std::swap(pool[k], pool[j]);
      }
      // p - 1 sorted cut points; redraw on ties so every successor keeps
      // positive mass.
      bool ok = false;
      while (!ok) {
        cuts[0] = 0.0;
        for (std::size_t k = 1; k < params.branching; ++k) cuts[k] = rng.uniform();
        cuts[params.branching] = 1.0;
        std::sort(cuts.begin() + 1, cuts.begin() + params.branching);
        ok = true;
        for (std::size_t k = 0; k < params.branching; ++k) ok = ok && cuts[k + 1] > cuts[k];
      }
      double* row = mdp.transition.data() + (s * na + a) * ns;
      for (std::size_t k = 0; k < params.branching; ++k) row[pool[k]] = cuts[k + 1] - cuts[k];
    }
  }

  mdp.reward.resize(ns);
  for (double& r : mdp.reward) r = rng.uniform();

  inst.features.phi = Matrix(ns, params.features);
  for (std::size_t s = 0; s < ns; ++s) {
    auto row = inst.features.phi.row(s);
    for (double& v : row) v = rng.normal();
    const double n = norm2(row);
    for (double& v : row) v /= n;
  }

  Matrix behavior(ns, na), target(ns, na);
  for (std::size_t s = 0; s < ns; ++s) {
    const Vector row = dirichlet_row(rng, na);
    std::copy(row.begin(), row.end(), behavior.row(s).begin());
  }
  for (std::size_t s = 0; s < ns; ++s) {
    const Vector row = dirichlet_row(rng, na);
    std::copy(row.begin(), row.end(), target.row(s).begin());
  }
  inst.policies = PolicyPair::make(std::move(behavior), std::move(target));
  return inst;
}

}  // namespace

void Mdp::validate() const {
  require(n_states >= 1 && n_actions >= 1, "MDP needs at least one state and one action");
  require(transition.size() == n_states * n_actions * n_states, "transition tensor has wrong size");
  require(reward.size() == n_states, "reward vector has wrong size");
  require(gamma > 0.0 && gamma < 1.0, "gamma must lie strictly inside (0,1)");
  for (std::size_t s = 0; s < n_states; ++s)
    for (std::size_t a = 0; a < n_actions; ++a) check_stochastic_row(row(s, a), "transition row");
  for (double r : reward) require(std::abs(r) <= r_max, "reward exceeds r_max");
}

PolicyPair PolicyPair::make(Matrix behavior, Matrix target) {
  require(behavior.rows() == target.rows() && behavior.cols() == target.cols(),
          "behavior and target policies have different shapes");
  PolicyPair pp;
  pp.rho = Matrix(behavior.rows(), behavior.cols());
  for (std::size_t s = 0; s < behavior.rows(); ++s) {
    for (std::size_t a = 0; a < behavior.cols(); ++a) {
      require(behavior(s, a) > 0.0, "behavior policy must be strictly positive");
      pp.rho(s, a) = target(s, a) / behavior(s, a);
      pp.rho_max = std::max(pp.rho_max, pp.rho(s, a));
    }
  }
  pp.behavior = std::move(behavior);
  pp.target = std::move(target);
  return pp;
}

void PolicyPair::validate(std::size_t n_states, std::size_t n_actions) const {
  require(behavior.rows() == n_states && behavior.cols() == n_actions, "behavior policy has wrong shape");
  require(target.rows() == n_states && target.cols() == n_actions, "target policy has wrong shape");
  for (std::size_t s = 0; s < n_states; ++s) {
    check_stochastic_row(behavior.row(s), "behavior row");
    check_stochastic_row(target.row(s), "target row");
    for (double v : behavior.row(s)) require(v > 0.0, "behavior policy must be strictly positive");
  }
}

void FeatureMap::validate(std::size_t n_states) const {
  require(phi.rows() == n_states && phi.cols() >= 1, "feature matrix has wrong shape");
  for (std::size_t s = 0; s < n_states; ++s)
    require(norm2(phi.row(s)) <= 1.0 + 1e-12, "feature row norm exceeds 1");
}

void Instance::validate() const {
  mdp.validate();
  policies.validate(mdp.n_states, mdp.n_actions);
  features.validate(mdp.n_states);
}

std::size_t feature_rank(const Matrix& phi, double rel_tol) {
  const Vector ev = symmetric_eigenvalues(phi.transpose() * phi);
  const double top = ev.empty() ? 0.0 : ev.back();
  return static_cast<std::size_t>(
      std::count_if(ev.begin(), ev.end(), [&](double v) { return v > rel_tol * top && v > 0.0; }));
}

Instance generate_garnet(const GarnetParams& params) {
  require(params.n_states >= 1 && params.n_actions >= 1, "need n_states >= 1 and n_actions >= 1");
  require(params.branching >= 1, "branching must be at least 1");
  require(params.branching <= params.n_states, "branching exceeds n_states");
  require(params.features >= 1, "need at least one feature");
  require(params.gamma > 0.0 && params.gamma < 1.0, "gamma must lie strictly inside (0,1)");

  for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
    const std::uint64_t seed =
        attempt == 0 ? params.seed : splitmix64(params.seed ^ (0xa0761d6478bd642fULL * attempt));
    Instance inst = generate_once(params, seed);
    if (feature_rank(inst.features.phi) < params.features) continue;
    if (!is_ergodic(induced_chain(inst.mdp, inst.policies.behavior))) continue;
    return inst;
  }
  fail(ErrorKind::kDegenerateInstance, "no full-rank, ergodic Garnet instance after 16 retries");
}

Matrix induced_chain(const Mdp& mdp, const Matrix& policy) {
  require(policy.rows() == mdp.n_states && policy.cols() == mdp.n_actions, "policy has wrong shape");
  Matrix P(mdp.n_states, mdp.n_states);
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    auto out = P.row(s);
    for (std::size_t a = 0; a < mdp.n_actions; ++a) axpy(policy(s, a), mdp.row(s, a), out);
  }
  return P;
}

bool is_ergodic(const Matrix& P) {
  const std::size_t n = P.rows();
  if (n == 0 || !P.square()) return false;
  if (n == 1) return P(0, 0) > 0.0;

  auto reach_all = [&](bool forward) {
    std::vector<char> seen(n, 0);
    std::queue<std::size_t> q;
    q.push(0);
    seen[0] = 1;
    std::size_t count = 1;
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      for (std::size_t v = 0; v < n; ++v) {
        const double w = forward ? P(u, v) : P(v, u);
        if (w > 0.0 && !seen[v]) {
          seen[v] = 1;
          ++count;
          q.push(v);
        }
      }
    }
    return count == n;
  };
  if (!reach_all(true) || !reach_all(false)) return false;

  // Period = gcd over edges of (level[u] + 1 - level[v]) for BFS levels.
  std::vector<long> level(n, -1);
  std::queue<std::size_t> q;
  level[0] = 0;
  q.push(0);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v = 0; v < n; ++v)
      if (P(u, v) > 0.0 && level[v] < 0) {
        level[v] = level[u] + 1;
        q.push(v);
      }
  }
  long period = 0;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = 0; v < n; ++v)
      if (P(u, v) > 0.0) period = std::gcd(period, std::abs(level[u] + 1 - level[v]));
  return period == 1;
}

Vector stationary_distribution(const Matrix& P, std::size_t max_iter) {
  require(P.square() && P.rows() >= 1, "transition matrix must be square and nonempty");
  if (!is_ergodic(P)) fail(ErrorKind::kNotErgodic, "chain is reducible or periodic");
  const std::size_t n = P.rows();
  Vector mu(n, 1.0 / static_cast<double>(n));
  for (std::size_t it = 0; it < max_iter; ++it) {
    Vector next = row_times(mu, P);
    const double total = std::accumulate(next.begin(), next.end(), 0.0);
    for (double& v : next) v /= total;
    mu.swap(next);
    if ((it & 7) == 7 || it + 1 == max_iter) {
      const Vector check = row_times(mu, P);
      if (norm1(sub(check, mu)) <= 1e-12) return mu;
    }
  }
  fail(ErrorKind::kNotErgodic, "power iteration did not reach ||mu P - mu||_1 <= 1e-12");
}

MixingEstimate mixing_constants(const Matrix& P, std::span<const double> mu, double tol,
                                std::size_t horizon_cap) {
  require(P.square() && P.rows() == mu.size(), "mixing_constants: shape mismatch");
  const std::size_t n = P.rows();
  auto tv_distance = [&](const Matrix& Pt) {
    double worst = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      double d = 0.0;
      for (std::size_t j = 0; j < n; ++j) d += std::abs(Pt(s, j) - mu[j]);
      worst = std::max(worst, 0.5 * d);
    }
    return worst;
  };

  MixingEstimate est;
  est.tv_curve.push_back(tv_distance(Matrix::identity(n)));
  Matrix Pt = P;
  for (std::size_t t = 1;; ++t) {
    const double d = tv_distance(Pt);
    est.tv_curve.push_back(d);
    if (d < tol) {
      est.horizon = t;
      break;
    }
    if (t >= horizon_cap) fail(ErrorKind::kNotErgodic, "total variation did not fall below tol");
    Pt = Pt * P;
  }

  const Vector& d = est.tv_curve;
  std::size_t last = est.horizon;
  while (last > 0 && d[last] <= 0.0) --last;
  if (last == 0) {
    // Exact mixing after one step: fixed convention.
    est.rho_hat = 0.5;
    est.m_hat = 1.0;
  } else {
    const std::size_t first = last / 2;
    double rho = std::pow(d[last] / d[first], 1.0 / static_cast<double>(last - first));
    if (!(rho > 0.0)) rho = 0.5;
    est.rho_hat = std::min(rho, 1.0 - 1e-12);
    double m = 0.0;
    for (std::size_t t = 0; t < d.size(); ++t) m = std::max(m, d[t] / std::pow(est.rho_hat, double(t)));
    est.m_hat = m;
  }
  // Round the envelope up until it dominates every recorded point exactly.
  for (std::size_t t = 0; t < d.size(); ++t)
    while (est.m_hat * std::pow(est.rho_hat, double(t)) < d[t])
      est.m_hat = std::nextafter(est.m_hat, INFINITY);
  return est;
}

Observation sample_step(const Mdp& mdp, const PolicyPair& policies, std::size_t s, Rng& rng) {
  Observation o;
  o.s = s;
  o.a = pick_dense(policies.behavior.row(s), rng.uniform());
  o.s_next = pick_dense(mdp.row(s, o.a), rng.uniform());
  o.r = mdp.reward[s];
  return o;
}

std::size_t TrajectorySampler::Row::pick(double u) const {
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
  if (it == cumulative.end()) return index.back();
  return index[static_cast<std::size_t>(it - cumulative.begin())];
}

TrajectorySampler::TrajectorySampler(const Mdp& mdp, const PolicyPair& policies) : mdp_(&mdp) {
  auto build = [](std::span<const double> row) {
    Row r;
    double cum = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (row[i] <= 0.0) continue;
      cum += row[i];
      r.index.push_back(static_cast<std::uint32_t>(i));
      r.cumulative.push_back(cum);
    }
    return r;
  };
  for (std::size_t s = 0; s < mdp.n_states; ++s) action_rows_.push_back(build(policies.behavior.row(s)));
  for (std::size_t s = 0; s < mdp.n_states; ++s)
    for (std::size_t a = 0; a < mdp.n_actions; ++a) transition_rows_.push_back(build(mdp.row(s, a)));
}

Observation TrajectorySampler::step(std::size_t s, Rng& rng) const {
  Observation o;
  o.s = s;
  o.a = action_rows_[s].pick(rng.uniform());
  o.s_next = transition_rows_[s * mdp_->n_actions + o.a].pick(rng.uniform());
  o.r = mdp_->reward[s];
  return o;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

using nlohmann::json;

json matrix_json(const Matrix& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  return rows;
}

Matrix matrix_from(const json& j) {
  const std::size_t rows = j.size();
  const std::size_t cols = rows == 0 ? 0 : j.at(0).size();
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    require(j.at(r).size() == cols, "ragged matrix in JSON");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

}  // namespace

std::string instance_to_json(const Instance& inst) {
  const Mdp& mdp = inst.mdp;
  json trans = json::array();
  for (std::size_t s = 0; s < mdp.n_states; ++s) {
    json per_action = json::array();
    for (std::size_t a = 0; a < mdp.n_actions; ++a)
      per_action.push_back(std::vector<double>(mdp.row(s, a).begin(), mdp.row(s, a).end()));
    trans.push_back(std::move(per_action));
  }
  json j;
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  j["gamma"] = mdp.gamma;
  j["r_max"] = mdp.r_max;
  j["transition"] = std::move(trans);
  j["reward"] = mdp.reward;
  j["behavior"] = matrix_json(inst.policies.behavior);
  j["target"] = matrix_json(inst.policies.target);
  j["phi"] = matrix_json(inst.features.phi);
  j["generator"] = {{"p", inst.generator.branching},
                    {"q", inst.generator.features},
                    {"seed", inst.generator.seed}};
  return j.dump();
}

Instance instance_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("malformed MDP JSON: ") + e.what());
  }
  try {
    Instance inst;
    Mdp& mdp = inst.mdp;
    mdp.n_states = j.at("n_states").get<std::size_t>();
    mdp.n_actions = j.at("n_actions").get<std::size_t>();
    mdp.gamma = j.at("gamma").get<double>();
    mdp.r_max = j.value("r_max", 1.0);
    mdp.transition.assign(mdp.n_states * mdp.n_actions * mdp.n_states, 0.0);
    const json& trans = j.at("transition");
    require(trans.size() == mdp.n_states, "transition has wrong number of states");
    for (std::size_t s = 0; s < mdp.n_states; ++s) {
      require(trans.at(s).size() == mdp.n_actions, "transition has wrong number of actions");
      for (std::size_t a = 0; a < mdp.n_actions; ++a) {
        const json& row = trans.at(s).at(a);
        require(row.size() == mdp.n_states, "transition row has wrong length");
        for (std::size_t k = 0; k < mdp.n_states; ++k)
          mdp.transition[(s * mdp.n_actions + a) * mdp.n_states + k] = row.at(k).get<double>();
      }
    }
    mdp.reward = j.at("reward").get<Vector>();
    inst.policies = PolicyPair::make(matrix_from(j.at("behavior")), matrix_from(j.at("target")));
    inst.features.phi = matrix_from(j.at("phi"));
    inst.generator.n_states = mdp.n_states;
    inst.generator.n_actions = mdp.n_actions;
    inst.generator.gamma = mdp.gamma;
    if (j.contains("generator")) {
      const json& g = j.at("generator");
      inst.generator.branching = g.value("p", std::size_t{0});
      inst.generator.features = g.value("q", inst.features.dim());
      inst.generator.seed = g.value("seed", std::uint64_t{0});
    }
    inst.validate();
    return inst;
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("MDP JSON missing or mistyped field: ") + e.what());
  }
}

void save_instance(const Instance& inst, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  out << instance_to_json(inst) << '\n';
  if (!out) fail(ErrorKind::kIoError, "write failed for " + path.string());
}

Instance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIoError, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return instance_from_json(ss.str());
}

}  // namespace tdclab
