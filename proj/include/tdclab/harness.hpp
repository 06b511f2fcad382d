#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "tdclab/bounds.hpp"
#include "tdclab/mdp.hpp"
#include "tdclab/operators.hpp"
#include "tdclab/tdc.hpp"

namespace tdclab {

// Blockwise schedules are planned per instance, so the config stores the plan
// inputs rather than the blocks.
struct BlockwiseSpec {
  double eps_target = 1e-3;
  bool relative_target = false;  // eps_target is a fraction of eps_0
  double eta = 1.0;
  PlanOptions options;
};

using ScheduleSpec = std::variant<Diminishing, Constant, BlockwiseSpec>;

struct GridSpec {
  enum class Kind { kGeometric, kEvery };
  Kind kind = Kind::kGeometric;
  double ratio = 1.05;
  std::uint64_t every = 1;

  // "geometric" or "every:K".
  static GridSpec parse(const std::string& text);
  std::string to_string() const;
  std::vector<std::uint64_t> build(std::uint64_t steps) const;
};

struct ExperimentConfig {
  std::string label;
  GarnetParams garnet;               // used unless instance_path is set
  std::optional<std::string> instance_path;
  ScheduleSpec schedule = Diminishing{};
  std::uint64_t steps = 1;           // blockwise: 0 means the whole plan, otherwise truncates it
  std::uint64_t runs = 1;
  std::uint64_t base_seed = 0;
  GridSpec grid;
  std::string output;
  unsigned threads = 0;              // 0 = hardware concurrency; not part of the canonical form

  void validate() const;
};

// Canonical single-line JSON (sorted keys, shortest round-trip doubles).
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig config_from_json(const std::string& text);

struct RunSeries {
  std::vector<std::uint64_t> checkpoints;
  std::vector<double> mean_theta_sq_err, se_theta_sq_err;
  std::vector<double> mean_z_sq_err, se_z_sq_err;
  std::uint64_t runs = 0;
  std::vector<std::uint64_t> block_boundaries;

  std::size_t size() const noexcept { return checkpoints.size(); }
  // Index of checkpoint t; throws InvalidArgument if t is not recorded.
  std::size_t index_of(std::uint64_t t) const;
};

// Mean and standard error (sample stdev / sqrt(runs), 0 for one run) at every
// checkpoint, accumulated in run-index order.
RunSeries aggregate(const std::vector<RunTrace>& traces);

// Generates or loads the instance named by the config.
Instance load_config_instance(const ExperimentConfig& config);

// The blockwise schedule a config resolves to on a given problem.
Blockwise resolve_blockwise(const BlockwiseSpec& spec, const ProblemData& pd, std::uint64_t steps);

RunSeries run_experiment(const ExperimentConfig& config);
RunSeries run_experiment(const ExperimentConfig& config, const Instance& inst, const ProblemData& pd);

enum class ErrorSeries { kTheta, kZ };

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

// OLS of ln(mean error) on ln(t) over the last tail_fraction of the t > 0
// checkpoints.
RateFit fit_rate(const RunSeries& series, double tail_fraction = 0.5, ErrorSeries which = ErrorSeries::kTheta);

// Same regression over the checkpoints with t_min <= t <= t_max.
RateFit fit_rate_window(const RunSeries& series, std::uint64_t t_min, std::uint64_t t_max,
                        ErrorSeries which = ErrorSeries::kTheta);

// Desk-to-full scaling: 0.1 gives G(50,5,10,8), 100 runs, 2e5 steps; 1.0 gives
// G(500,20,50,20), 500 runs, 5e5 steps.
struct PresetScale {
  GarnetParams garnet;
  std::uint64_t runs = 0;
  std::uint64_t steps = 0;
};
PresetScale preset_scale(double scale);

std::vector<std::string> preset_names();
// Throws UnknownPreset for names outside fig1a-d, fig2, fig3.
std::vector<ExperimentConfig> preset(const std::string& name, double scale = 0.1);

// Tuned blockwise spec used by the fig3 preset.
BlockwiseSpec tuned_blockwise_spec();

struct CsvData {
  std::string config_json;
  RunSeries series;
};

void write_csv(const std::filesystem::path& path, const RunSeries& series, const std::string& config_json);
std::string format_csv(const RunSeries& series, const std::string& config_json);
CsvData parse_csv(const std::string& text);
CsvData read_csv(const std::filesystem::path& path);

inline constexpr const char* kCsvHeader = "t,mean_theta_sq_err,se_theta_sq_err,mean_z_sq_err,se_z_sq_err";

}  // namespace tdclab
