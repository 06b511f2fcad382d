#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "tdclab/linalg.hpp"
#include "tdclab/mdp.hpp"
#include "tdclab/operators.hpp"

namespace tdclab {

// alpha_t = c_alpha / (1+t)^sigma, beta_t = c_beta / (1+t)^nu.
struct Diminishing {
  double c_alpha = 1.0;
  double c_beta = 1.0;
  double sigma = 1.0;
  double nu = 0.5;
};

struct Constant {
  double alpha = 0.1;
  double beta = 0.1;
};

struct Block {
  double alpha = 0.0;
  double beta = 0.0;
  std::uint64_t length = 0;
};

struct Blockwise {
  std::vector<Block> blocks;
  double eta = 1.0;  // beta_s / alpha_s

  std::uint64_t total_steps() const;
};

using StepSchedule = std::variant<Diminishing, Constant, Blockwise>;

// Throws InvalidArgument when a schedule violates its invariants.
void validate(const StepSchedule& schedule);

struct StepSizes {
  double alpha = 0.0;
  double beta = 0.0;
};

// Throws HorizonExceeded for a blockwise t beyond the plan.
StepSizes stepsize_at(const StepSchedule& schedule, std::uint64_t t);

struct TdcState {
  Vector theta;
  Vector w;
  std::uint64_t t = 0;

  static TdcState zero(std::size_t d) { return {Vector(d, 0.0), Vector(d, 0.0), 0}; }
};

struct SampleMatrices {
  Matrix A, B, C;
  Vector b;
};

// A_t, B_t, C_t, b_t for one observation. Dense; used by tests and the
// Monte-Carlo consistency check, never by the update itself.
SampleMatrices per_sample_matrices(const Observation& obs, const FeatureMap& features, double rho, double gamma);

// Euclidean projection onto the ball of radius R.
Vector project_ball(std::span<const double> x, double R);
void project_ball_inplace(std::span<double> x, double R);

struct StepContext {
  const FeatureMap* features = nullptr;
  double gamma = 0.0;
  double R_theta = 0.0;
  double R_w = 0.0;
};

// One projected TDC update. Both iterates read the pre-step (theta, w); the
// rank-one structure of the sample matrices reduces the update to O(d).
void tdc_step(TdcState& state, const Observation& obs, StepSizes step, double rho, const StepContext& ctx);

struct TracePoint {
  std::uint64_t t = 0;
  double theta_sq_err = 0.0;  // ||theta_t - theta*||^2
  double z_sq_err = 0.0;      // ||w_t - psi(theta_t)||^2
};

struct RunTrace {
  std::vector<TracePoint> points;
  std::vector<std::uint64_t> block_ends;  // blockwise runs only
  std::vector<TracePoint> block_points;   // errors at each block end
};

// Checkpoints 0, then t_{k+1} = max(t_k + 1, round(ratio * t_k)), always ending at steps.
std::vector<std::uint64_t> geometric_grid(std::uint64_t steps, double ratio = 1.05);
std::vector<std::uint64_t> arithmetic_grid(std::uint64_t steps, std::uint64_t every);

// Single continuous behavior trajectory from theta_0 = w_0 = 0, recording both
// errors at every checkpoint in `grid` (sorted, within [0, steps]). The start
// state is drawn uniformly from the run's stream.
RunTrace run_tdc(const Instance& inst, const ProblemData& pd, const StepSchedule& schedule, std::uint64_t steps,
                 std::uint64_t seed, std::span<const std::uint64_t> grid);

// Algorithm-1 driver: blocks share one trajectory and carry state across
// boundaries. Block ends are recorded in addition to the grid.
RunTrace run_blockwise(const Instance& inst, const ProblemData& pd, const Blockwise& plan, std::uint64_t seed,
                       std::span<const std::uint64_t> grid);

}  // namespace tdclab
