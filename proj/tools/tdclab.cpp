// tdclab: generate Garnet instances, solve them, print bound constants, and run
// TDC experiments.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tdclab/bounds.hpp"
#include "tdclab/errors.hpp"
#include "tdclab/harness.hpp"
#include "tdclab/mdp.hpp"
#include "tdclab/operators.hpp"

namespace fs = std::filesystem;
using namespace tdclab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitArgs = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitIo = 4;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerateInstance:
    case ErrorKind::kNotErgodic:
    case ErrorKind::kSingularOperator:
    case ErrorKind::kNotNegativeDefinite:
    case ErrorKind::kPlanInfeasible:
    case ErrorKind::kNonpositiveError:
      return kExitInfeasible;
    case ErrorKind::kIoError:
      return kExitIo;
    default:
      return kExitArgs;
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  f << text << '\n';
  if (!f) fail(ErrorKind::kIoError, "write to " + path.string() + " failed");
}

void print_summary(const std::string& label, const RunSeries& s) {
  const std::size_t k = s.size() - 1;
  std::printf("%s: t=%llu mean_theta_sq_err=%.6g mean_z_sq_err=%.6g runs=%llu\n", label.c_str(),
              static_cast<unsigned long long>(s.checkpoints[k]), s.mean_theta_sq_err[k], s.mean_z_sq_err[k],
              static_cast<unsigned long long>(s.runs));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Projected two time-scale TDC on Garnet MDPs"};
  app.require_subcommand(1);

  // generate
  GarnetParams gp;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "Generate a Garnet instance");
  gen->add_option("--ns", gp.n_states, "Number of states")->required();
  gen->add_option("--na", gp.n_actions, "Number of actions")->required();
  gen->add_option("--branching", gp.branching, "Successors per (s, a)")->required();
  gen->add_option("--features", gp.features, "Feature dimension")->required();
  gen->add_option("--seed", gp.seed, "Generator seed")->required();
  gen->add_option("--gamma", gp.gamma, "Discount factor")->capture_default_str();
  gen->add_option("--out", gen_out, "Output JSON")->required();

  // solve
  std::string mdp_path, solve_out;
  auto* solve = app.add_subcommand("solve", "Exact operators, theta*, spectra and radii");
  solve->add_option("--mdp", mdp_path, "Instance JSON")->required();
  solve->add_option("--out", solve_out, "Output JSON")->required();

  // constants
  std::optional<double> const_eta;
  double const_alpha = 0.1, const_beta = 0.02;
  std::string const_out, const_form = "tdc";
  auto* constants = app.add_subcommand("constants", "Bound constants for an instance");
  constants->add_option("--mdp", mdp_path, "Instance JSON")->required();
  constants->add_option("--eta", const_eta, "beta/alpha ratio of the stacked system (default beta/alpha)");
  constants->add_option("--alpha", const_alpha, "Constant stepsize alpha")->capture_default_str();
  constants->add_option("--beta", const_beta, "Constant stepsize beta")->capture_default_str();
  constants->add_option("--stacked", const_form, "Stacked-system form")
      ->check(CLI::IsMember({"tdc", "literal"}))
      ->capture_default_str();
  constants->add_option("--out", const_out, "Output JSON")->required();

  // run
  std::string schedule_name, grid_text = "geometric", run_out;
  Diminishing dim{};
  Constant con{};
  BlockwiseSpec blk{};
  std::uint64_t steps = 0, runs = 1, seed = 0;
  unsigned threads = 0;
  auto* run = app.add_subcommand("run", "Run a multi-run TDC experiment");
  run->add_option("--mdp", mdp_path, "Instance JSON")->required();
  run->add_option("--schedule", schedule_name, "Stepsize schedule")
      ->required()
      ->check(CLI::IsMember({"diminishing", "constant", "blockwise"}));
  run->add_option("--c-alpha", dim.c_alpha, "Diminishing: alpha scale");
  run->add_option("--c-beta", dim.c_beta, "Diminishing: beta scale");
  run->add_option("--sigma", dim.sigma, "Diminishing: alpha decay exponent");
  run->add_option("--nu", dim.nu, "Diminishing: beta decay exponent");
  run->add_option("--alpha", con.alpha, "Constant: alpha");
  run->add_option("--beta", con.beta, "Constant: beta");
  run->add_option("--eps-target", blk.eps_target, "Blockwise: target accuracy");
  run->add_flag("--relative-target", blk.relative_target, "Blockwise: target is a fraction of eps_0");
  run->add_option("--eta", blk.eta, "Blockwise: beta/alpha");
  run->add_flag("--eps-unsquared", blk.options.eps_unsquared, "Blockwise: eps_0 = ||theta_0 - theta*||");
  run->add_option("--lambda-x", blk.options.lambda_x_override, "Blockwise: tuned |lambda_x|");
  run->add_option("--c7", blk.options.C7_override, "Blockwise: tuned C7");
  run->add_option("--steps", steps, "Steps per run (blockwise: 0 = whole plan)");
  run->add_option("--runs", runs, "Independent runs")->capture_default_str();
  run->add_option("--seed", seed, "Base seed")->capture_default_str();
  run->add_option("--record-grid", grid_text, "geometric or every:K")->capture_default_str();
  run->add_option("--threads", threads, "Worker threads (0 = all cores)");
  run->add_option("--out", run_out, "Output CSV")->required();

  // preset
  std::string preset_name, out_dir;
  double scale = 0.1;
  auto* pre = app.add_subcommand("preset", "Run every configuration of a figure preset");
  pre->add_option("--name", preset_name, "fig1a|fig1b|fig1c|fig1d|fig2|fig3")->required();
  pre->add_option("--scale", scale, "Scale factor in (0, 1]")->capture_default_str();
  pre->add_option("--out-dir", out_dir, "Output directory")->required();
  pre->add_option("--threads", threads, "Worker threads (0 = all cores)");

  // fit-rate
  std::string fit_in, which = "theta";
  double tail = 0.5;
  std::optional<std::uint64_t> t_min, t_max;
  auto* fit = app.add_subcommand("fit-rate", "Log-log slope of a CSV error curve");
  fit->add_option("--in", fit_in, "Input CSV")->required();
  fit->add_option("--tail", tail, "Tail fraction of checkpoints")->capture_default_str();
  fit->add_option("--which", which, "theta or z")->check(CLI::IsMember({"theta", "z"}))->capture_default_str();
  fit->add_option("--t-min", t_min, "Fit window start (overrides --tail)");
  fit->add_option("--t-max", t_max, "Fit window end");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitArgs;
  }

  try {
    if (*gen) {
      const Instance inst = generate_garnet(gp);
      save_instance(inst, gen_out);
    } else if (*solve) {
      const ProblemData pd = build_problem(load_instance(mdp_path));
      write_text(solve_out, problem_to_json(pd));
    } else if (*constants) {
      const ProblemData pd = build_problem(load_instance(mdp_path));
      const double eta = const_eta.value_or(const_beta / const_alpha);
      const auto form = const_form == "literal" ? StackedForm::kLiteral : StackedForm::kTdc;
      const ConstantsTable table = full_constants(pd, const_alpha, const_beta, eta, form);
      auto j = nlohmann::json::parse(constants_to_json(table));
      j["eta_lower_bound"] = {{"value", eta_lower_bound(pd)},
                              {"source", "blockwise theorem: (1/2) max{0, lambda_min(sym(C^-1 (A^T + A)))}"}};
      j["alpha"] = const_alpha;
      j["beta"] = const_beta;
      write_text(const_out, j.dump(2));
    } else if (*run) {
      ExperimentConfig config;
      config.label = schedule_name;
      config.instance_path = mdp_path;
      if (schedule_name == "diminishing")
        config.schedule = dim;
      else if (schedule_name == "constant")
        config.schedule = con;
      else
        config.schedule = blk;
      if (schedule_name != "blockwise" && steps == 0) fail(ErrorKind::kInvalidArgument, "--steps is required");
      config.steps = steps;
      config.runs = runs;
      config.base_seed = seed;
      config.grid = GridSpec::parse(grid_text);
      config.output = run_out;
      config.threads = threads;
      const RunSeries series = run_experiment(config);
      write_csv(run_out, series, config_to_json(config));
      print_summary(config.label, series);
    } else if (*pre) {
      std::vector<ExperimentConfig> configs = preset(preset_name, scale);
      fs::create_directories(out_dir);
      std::optional<Instance> inst;
      std::optional<ProblemData> pd;
      for (std::size_t k = 0; k < configs.size(); ++k) {
        ExperimentConfig& c = configs[k];
        c.output = (fs::path(out_dir) / (preset_name + "_" + std::to_string(k) + ".csv")).string();
        c.threads = threads;
        if (!inst) {
          inst = load_config_instance(c);
          pd = build_problem(*inst);
        }
        const RunSeries series = run_experiment(c, *inst, *pd);
        write_csv(c.output, series, config_to_json(c));
        print_summary(c.label, series);
      }
    } else if (*fit) {
      const CsvData data = read_csv(fit_in);
      const ErrorSeries w = which == "z" ? ErrorSeries::kZ : ErrorSeries::kTheta;
      const RateFit r = t_min ? fit_rate_window(data.series, *t_min, t_max.value_or(UINT64_MAX), w)
                              : fit_rate(data.series, tail, w);
      std::printf("slope=%.10g intercept=%.10g r_squared=%.10g points=%zu\n", r.slope, r.intercept, r.r_squared,
                  r.points);
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "tdclab: %s\n", e.what());
    return exit_code(e.kind());
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "tdclab: %s\n", e.what());
    return kExitIo;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "tdclab: %s\n", e.what());
    return kExitArgs;
  }
  return kExitOk;
}
