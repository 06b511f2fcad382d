#include "tdclab/tdc.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tdclab/errors.hpp"

namespace tdclab {

std::uint64_t Blockwise::total_steps() const {
  std::uint64_t total = 0;
  for (const Block& b : blocks) total += b.length;
  return total;
}

namespace {

struct Validator {
  void operator()(const Diminishing& d) const {
    require(d.c_alpha > 0.0 && d.c_beta > 0.0, "diminishing schedule needs c_alpha, c_beta > 0");
    // nu == sigma is allowed: the nu/sigma = 1 curves are part of the figure-1 sweep.
    require(d.nu > 0.0 && d.nu <= d.sigma && d.sigma <= 1.0, "diminishing schedule needs 0 < nu <= sigma <= 1");
  }
  void operator()(const Constant& c) const {
    require(c.alpha > 0.0 && c.beta > 0.0, "constant schedule needs alpha, beta > 0");
  }
  void operator()(const Blockwise& plan) const {
    require(plan.eta > 0.0, "blockwise schedule needs eta > 0");
    for (std::size_t s = 0; s < plan.blocks.size(); ++s) {
      const Block& b = plan.blocks[s];
      require(b.length >= 1, "every block needs at least one step");
      require(b.alpha > 0.0, "block stepsizes must be positive");
      require(std::abs(b.beta - plan.eta * b.alpha) <= 1e-12 * std::max(1.0, b.beta),
              "block beta must equal eta * alpha");
      if (s > 0) require(b.alpha < plan.blocks[s - 1].alpha, "block alphas must strictly decrease");
    }
  }
};

}  // namespace

void validate(const StepSchedule& schedule) { std::visit(Validator{}, schedule); }

StepSizes stepsize_at(const StepSchedule& schedule, std::uint64_t t) {
  if (const auto* d = std::get_if<Diminishing>(&schedule)) {
    const double base = 1.0 + static_cast<double>(t);
    return {d->c_alpha * std::pow(base, -d->sigma), d->c_beta * std::pow(base, -d->nu)};
  }
  if (const auto* c = std::get_if<Constant>(&schedule)) return {c->alpha, c->beta};
  const auto& plan = std::get<Blockwise>(schedule);
  std::uint64_t end = 0;
  for (const Block& b : plan.blocks) {
    end += b.length;
    if (t < end) return {b.alpha, b.beta};
  }
  fail(ErrorKind::kHorizonExceeded, "t = " + std::to_string(t) + " is beyond the blockwise plan");
}

SampleMatrices per_sample_matrices(const Observation& obs, const FeatureMap& features, double rho, double gamma) {
  const auto phi = features(obs.s);
  const auto phi_next = features(obs.s_next);
  const std::size_t d = features.dim();
  Vector diff(d);
  for (std::size_t k = 0; k < d; ++k) diff[k] = gamma * phi_next[k] - phi[k];
  SampleMatrices m;
  m.A = outer(phi, diff) * rho;
  m.B = outer(phi_next, phi) * (-gamma * rho);
  m.C = outer(phi, phi) * -1.0;
  m.b = scaled(phi, rho * obs.r);
  return m;
}

void project_ball_inplace(std::span<double> x, double R) {
  const double n = norm2(x);
  if (n <= R) return;
  const double s = R / n;
  for (double& v : x) v *= s;
}

Vector project_ball(std::span<const double> x, double R) {
  Vector out(x.begin(), x.end());
  project_ball_inplace(out, R);
  return out;
}

void tdc_step(TdcState& state, const Observation& obs, StepSizes step, double rho, const StepContext& ctx) {
  const auto phi = (*ctx.features)(obs.s);
  const auto phi_next = (*ctx.features)(obs.s_next);
  const std::size_t d = phi.size();

  // A_t theta + b_t = rho * delta * phi with the TD error delta.
  double v = 0.0, v_next = 0.0, phi_w = 0.0;
  for (std::size_t k = 0; k < d; ++k) {
    v += phi[k] * state.theta[k];
    v_next += phi_next[k] * state.theta[k];
    phi_w += phi[k] * state.w[k];
  }
  const double delta = obs.r + ctx.gamma * v_next - v;
  const double theta_phi = step.alpha * rho * delta;
  const double theta_phi_next = -step.alpha * ctx.gamma * rho * phi_w;
  const double w_phi = step.beta * (rho * delta - phi_w);
  for (std::size_t k = 0; k < d; ++k) {
    state.theta[k] += theta_phi * phi[k] + theta_phi_next * phi_next[k];
    state.w[k] += w_phi * phi[k];
  }
  project_ball_inplace(state.theta, ctx.R_theta);
  project_ball_inplace(state.w, ctx.R_w);
  ++state.t;
}

std::vector<std::uint64_t> geometric_grid(std::uint64_t steps, double ratio) {
  require(ratio > 1.0, "geometric grid ratio must exceed 1");
  std::vector<std::uint64_t> grid{0};
  std::uint64_t t = 1;
  while (t < steps) {
    grid.push_back(t);
    const auto next = static_cast<std::uint64_t>(std::llround(static_cast<double>(t) * ratio));
    t = std::max(t + 1, next);
  }
  if (steps > 0) grid.push_back(steps);
  return grid;
}

std::vector<std::uint64_t> arithmetic_grid(std::uint64_t steps, std::uint64_t every) {
  require(every >= 1, "record interval must be positive");
  std::vector<std::uint64_t> grid;
  for (std::uint64_t t = 0; t < steps; t += every) grid.push_back(t);
  grid.push_back(steps);
  return grid;
}

namespace {

TracePoint measure(const TdcState& state, const ProblemData& pd) {
  const Vector z = sub(state.w, psi(pd, state.theta));
  return {state.t, norm2_sq(sub(state.theta, pd.theta_star)), norm2_sq(z)};
}

RunTrace run_impl(const Instance& inst, const ProblemData& pd, const StepSchedule& schedule, std::uint64_t steps,
                  std::uint64_t seed, std::span<const std::uint64_t> grid,
                  std::span<const std::uint64_t> block_ends) {
  require(std::is_sorted(grid.begin(), grid.end()), "record grid must be sorted");
  require(grid.empty() || grid.back() <= steps, "record grid exceeds the step count");
  require(inst.features.dim() == pd.dim(), "instance and problem dimensions differ");

  const TrajectorySampler sampler(inst.mdp, inst.policies);
  const StepContext ctx{&inst.features, inst.mdp.gamma, pd.R_theta, pd.R_w};
  Rng rng(seed);
  std::size_t s = static_cast<std::size_t>(rng.below(inst.mdp.n_states));
  TdcState state = TdcState::zero(pd.dim());

  RunTrace trace;
  trace.points.reserve(grid.size());
  std::size_t gi = 0, bi = 0;
  auto record = [&] {
    while (gi < grid.size() && grid[gi] == state.t) {
      trace.points.push_back(measure(state, pd));
      ++gi;
    }
    while (bi < block_ends.size() && block_ends[bi] == state.t) {
      trace.block_ends.push_back(state.t);
      trace.block_points.push_back(measure(state, pd));
      ++bi;
    }
  };
  record();
  for (std::uint64_t t = 0; t < steps; ++t) {
    const Observation obs = sampler.step(s, rng);
    tdc_step(state, obs, stepsize_at(schedule, t), inst.policies.rho(obs.s, obs.a), ctx);
    s = obs.s_next;
    record();
  }
  return trace;
}

}  // namespace

RunTrace run_tdc(const Instance& inst, const ProblemData& pd, const StepSchedule& schedule, std::uint64_t steps,
                 std::uint64_t seed, std::span<const std::uint64_t> grid) {
  validate(schedule);
  if (const auto* plan = std::get_if<Blockwise>(&schedule))
    require(steps <= plan->total_steps(), "steps exceed the blockwise plan");
  return run_impl(inst, pd, schedule, steps, seed, grid, {});
}

RunTrace run_blockwise(const Instance& inst, const ProblemData& pd, const Blockwise& plan, std::uint64_t seed,
                       std::span<const std::uint64_t> grid) {
  const StepSchedule schedule = plan;
  validate(schedule);
  std::vector<std::uint64_t> ends;
  std::uint64_t t = 0;
  for (const Block& b : plan.blocks) ends.push_back(t += b.length);
  return run_impl(inst, pd, schedule, plan.total_steps(), seed, grid, ends);
}

}  // namespace tdclab
