#include "tdclab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "tdclab/errors.hpp"

namespace tdclab {

using nlohmann::json;

GridSpec GridSpec::parse(const std::string& text) {
  GridSpec g;
  if (text == "geometric") return g;
  auto number_after = [&](std::size_t prefix) -> std::string { return text.substr(prefix); };
  if (text.rfind("geometric:", 0) == 0) {
    try {
      g.ratio = std::stod(number_after(10));
    } catch (const std::exception&) {
      fail(ErrorKind::kInvalidArgument, "bad record grid '" + text + "'");
    }
    require(g.ratio > 1.0, "geometric grid ratio must exceed 1");
    return g;
  }
  if (text.rfind("every:", 0) == 0) {
    const std::string k = number_after(6);
    require(!k.empty() && k.find_first_not_of("0123456789") == std::string::npos,
            "bad record grid '" + text + "'");
    g.kind = Kind::kEvery;
    g.every = std::stoull(k);
    require(g.every >= 1, "record interval must be positive");
    return g;
  }
  fail(ErrorKind::kInvalidArgument, "record grid must be 'geometric' or 'every:K', got '" + text + "'");
}

std::string GridSpec::to_string() const {
  if (kind == Kind::kEvery) return "every:" + std::to_string(every);
  if (ratio == 1.05) return "geometric";
  return "geometric:" + json(ratio).dump();
}

std::vector<std::uint64_t> GridSpec::build(std::uint64_t steps) const {
  return kind == Kind::kEvery ? arithmetic_grid(steps, every) : geometric_grid(steps, ratio);
}

void ExperimentConfig::validate() const {
  require(runs >= 1, "runs must be at least 1");
  const bool blockwise = std::holds_alternative<BlockwiseSpec>(schedule);
  require(blockwise || steps >= 1, "steps must be at least 1");
  if (const auto* d = std::get_if<Diminishing>(&schedule)) tdclab::validate(StepSchedule{*d});
  if (const auto* c = std::get_if<Constant>(&schedule)) tdclab::validate(StepSchedule{*c});
  if (const auto* b = std::get_if<BlockwiseSpec>(&schedule)) {
    require(b->eps_target > 0.0, "eps_target must be positive");
    require(b->eta > 0.0, "eta must be positive");
  }
  if (!instance_path) {
    require(garnet.n_states >= 1 && garnet.n_actions >= 1 && garnet.branching >= 1 && garnet.features >= 1,
            "generator parameters must be positive");
  }
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["label"] = c.label;
  if (c.instance_path) {
    j["instance"] = {{"path", *c.instance_path}};
  } else {
    j["instance"] = {{"garnet",
                      {{"n_states", c.garnet.n_states},
                       {"n_actions", c.garnet.n_actions},
                       {"branching", c.garnet.branching},
                       {"features", c.garnet.features},
                       {"seed", c.garnet.seed},
                       {"gamma", c.garnet.gamma}}}};
  }
  if (const auto* d = std::get_if<Diminishing>(&c.schedule)) {
    j["schedule"] = {{"kind", "diminishing"}, {"c_alpha", d->c_alpha}, {"c_beta", d->c_beta},
                     {"sigma", d->sigma},     {"nu", d->nu}};
  } else if (const auto* k = std::get_if<Constant>(&c.schedule)) {
    j["schedule"] = {{"kind", "constant"}, {"alpha", k->alpha}, {"beta", k->beta}};
  } else {
    const auto& b = std::get<BlockwiseSpec>(c.schedule);
    j["schedule"] = {{"kind", "blockwise"},
                     {"eps_target", b.eps_target},
                     {"relative_target", b.relative_target},
                     {"eta", b.eta},
                     {"eps_unsquared", b.options.eps_unsquared},
                     {"lambda_x_override", b.options.lambda_x_override},
                     {"C7_override", b.options.C7_override}};
  }
  j["steps"] = c.steps;
  j["runs"] = c.runs;
  j["base_seed"] = c.base_seed;
  j["record_grid"] = c.grid.to_string();
  j["output"] = c.output;
  return j.dump();
}

ExperimentConfig config_from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    c.label = j.value("label", "");
    const json& inst = j.at("instance");
    if (inst.contains("path")) {
      c.instance_path = inst.at("path").get<std::string>();
    } else {
      const json& g = inst.at("garnet");
      c.garnet.n_states = g.at("n_states").get<std::size_t>();
      c.garnet.n_actions = g.at("n_actions").get<std::size_t>();
      c.garnet.branching = g.at("branching").get<std::size_t>();
      c.garnet.features = g.at("features").get<std::size_t>();
      c.garnet.seed = g.at("seed").get<std::uint64_t>();
      c.garnet.gamma = g.value("gamma", 0.95);
    }
    const json& s = j.at("schedule");
    const std::string kind = s.at("kind").get<std::string>();
    if (kind == "diminishing") {
      c.schedule = Diminishing{s.at("c_alpha").get<double>(), s.at("c_beta").get<double>(),
                               s.at("sigma").get<double>(), s.at("nu").get<double>()};
    } else if (kind == "constant") {
      c.schedule = Constant{s.at("alpha").get<double>(), s.at("beta").get<double>()};
    } else if (kind == "blockwise") {
      BlockwiseSpec b;
      b.eps_target = s.at("eps_target").get<double>();
      b.relative_target = s.value("relative_target", false);
      b.eta = s.at("eta").get<double>();
      b.options.eps_unsquared = s.value("eps_unsquared", false);
      b.options.lambda_x_override = s.value("lambda_x_override", 0.0);
      b.options.C7_override = s.value("C7_override", 0.0);
      c.schedule = b;
    } else {
      fail(ErrorKind::kInvalidArgument, "unknown schedule kind '" + kind + "'");
    }
    c.steps = j.at("steps").get<std::uint64_t>();
    c.runs = j.at("runs").get<std::uint64_t>();
    c.base_seed = j.at("base_seed").get<std::uint64_t>();
    c.grid = GridSpec::parse(j.value("record_grid", "geometric"));
    c.output = j.value("output", "");
  } catch (const json::exception& e) {
    fail(ErrorKind::kInvalidArgument, std::string("bad experiment config: ") + e.what());
  }
  return c;
}

std::size_t RunSeries::index_of(std::uint64_t t) const {
  const auto it = std::lower_bound(checkpoints.begin(), checkpoints.end(), t);
  if (it == checkpoints.end() || *it != t) fail(ErrorKind::kInvalidArgument, "t = " + std::to_string(t) + " not recorded");
  return static_cast<std::size_t>(it - checkpoints.begin());
}

RunSeries aggregate(const std::vector<RunTrace>& traces) {
  require(!traces.empty(), "aggregate needs at least one run");
  const std::size_t n = traces.front().points.size();
  for (const RunTrace& tr : traces) require(tr.points.size() == n, "runs recorded different checkpoints");

  RunSeries out;
  out.runs = traces.size();
  out.checkpoints.resize(n);
  out.mean_theta_sq_err.assign(n, 0.0);
  out.se_theta_sq_err.assign(n, 0.0);
  out.mean_z_sq_err.assign(n, 0.0);
  out.se_z_sq_err.assign(n, 0.0);
  const double runs = static_cast<double>(traces.size());
  for (std::size_t k = 0; k < n; ++k) {
    const std::uint64_t t = traces.front().points[k].t;
    out.checkpoints[k] = t;
    double st = 0.0, sz = 0.0;
    for (const RunTrace& tr : traces) {
      require(tr.points[k].t == t, "runs recorded different checkpoints");
      st += tr.points[k].theta_sq_err;
      sz += tr.points[k].z_sq_err;
    }
    const double mt = st / runs, mz = sz / runs;
    out.mean_theta_sq_err[k] = mt;
    out.mean_z_sq_err[k] = mz;
    if (traces.size() > 1) {
      double vt = 0.0, vz = 0.0;
      for (const RunTrace& tr : traces) {
        const double dt = tr.points[k].theta_sq_err - mt, dz = tr.points[k].z_sq_err - mz;
        vt += dt * dt;
        vz += dz * dz;
      }
      out.se_theta_sq_err[k] = std::sqrt(vt / (runs - 1.0)) / std::sqrt(runs);
      out.se_z_sq_err[k] = std::sqrt(vz / (runs - 1.0)) / std::sqrt(runs);
    }
  }
  return out;
}

Instance load_config_instance(const ExperimentConfig& config) {
  if (config.instance_path) return load_instance(*config.instance_path);
  return generate_garnet(config.garnet);
}

Blockwise resolve_blockwise(const BlockwiseSpec& spec, const ProblemData& pd, std::uint64_t steps) {
  const Vector theta0(pd.dim(), 0.0);
  double eps_target = spec.eps_target;
  if (spec.relative_target) {
    const double dist = norm2(pd.theta_star);
    eps_target *= spec.options.eps_unsquared ? dist : dist * dist;
  }
  const ConstantsTable table;  // eta = 0 never matches, so the plan builds its own stacked system
  BlockwisePlan plan = blockwise_plan(pd, table, eps_target, spec.eta, theta0, spec.options);
  Blockwise sched = plan.schedule();
  if (steps == 0) return sched;
  if (sched.blocks.empty()) fail(ErrorKind::kPlanInfeasible, "plan has no blocks to run");
  // Fit the plan to exactly `steps` samples: cut it short, or let the final
  // block keep running.
  std::uint64_t used = 0;
  std::vector<Block> blocks;
  for (const Block& b : sched.blocks) {
    if (used >= steps) break;
    Block cut = b;
    cut.length = std::min(b.length, steps - used);
    used += cut.length;
    blocks.push_back(cut);
  }
  if (used < steps) blocks.back().length += steps - used;
  sched.blocks = std::move(blocks);
  return sched;
}

RunSeries run_experiment(const ExperimentConfig& config) {
  config.validate();
  const Instance inst = load_config_instance(config);
  const ProblemData pd = build_problem(inst);
  return run_experiment(config, inst, pd);
}

RunSeries run_experiment(const ExperimentConfig& config, const Instance& inst, const ProblemData& pd) {
  config.validate();
  std::optional<Blockwise> plan;
  std::vector<std::uint64_t> grid;
  std::vector<std::uint64_t> ends;
  std::uint64_t steps = config.steps;
  StepSchedule schedule;
  if (const auto* spec = std::get_if<BlockwiseSpec>(&config.schedule)) {
    plan = resolve_blockwise(*spec, pd, config.steps);
    steps = plan->total_steps();
    require(steps >= 1, "blockwise plan has no steps");
    grid = config.grid.build(steps);
    std::uint64_t t = 0;
    for (const Block& b : plan->blocks) ends.push_back(t += b.length);
    std::vector<std::uint64_t> merged;
    std::set_union(grid.begin(), grid.end(), ends.begin(), ends.end(), std::back_inserter(merged));
    grid = std::move(merged);
  } else {
    schedule = std::holds_alternative<Diminishing>(config.schedule)
                   ? StepSchedule{std::get<Diminishing>(config.schedule)}
                   : StepSchedule{std::get<Constant>(config.schedule)};
    grid = config.grid.build(steps);
  }

  const std::uint64_t runs = config.runs;
  std::vector<RunTrace> traces(runs);
  std::atomic<std::uint64_t> next{0};
  std::atomic<bool> abort{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::uint64_t i = next.fetch_add(1);
      if (i >= runs || abort.load()) return;
      try {
        const std::uint64_t seed = split_seed(config.base_seed, i);
        traces[i] = plan ? run_blockwise(inst, pd, *plan, seed, grid) : run_tdc(inst, pd, schedule, steps, seed, grid);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        abort.store(true);
      }
    }
  };
  unsigned threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::uint64_t>(threads, runs));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) std::rethrow_exception(error);

  RunSeries series = aggregate(traces);
  series.block_boundaries = ends;
  return series;
}

namespace {

RateFit ols_log_log(const RunSeries& series, std::size_t first, std::size_t last, ErrorSeries which) {
  const auto& y = which == ErrorSeries::kTheta ? series.mean_theta_sq_err : series.mean_z_sq_err;
  const std::size_t n = last - first;
  if (n < 5) fail(ErrorKind::kInsufficientData, "need at least 5 checkpoints, have " + std::to_string(n));
  std::vector<double> lx, ly;
  for (std::size_t k = first; k < last; ++k) {
    if (!(y[k] > 0.0))
      fail(ErrorKind::kNonpositiveError, "mean error at t = " + std::to_string(series.checkpoints[k]) + " is not positive");
    lx.push_back(std::log(static_cast<double>(series.checkpoints[k])));
    ly.push_back(std::log(y[k]));
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < n; ++k) mx += lx[k], my += ly[k];
  mx /= double(n);
  my /= double(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double dx = lx[k] - mx, dy = ly[k] - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  require(sxx > 0.0, "tail window has a single distinct t");
  RateFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  const double ss_res = std::max(0.0, syy - fit.slope * sxy);
  fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  fit.points = n;
  return fit;
}

}  // namespace

RateFit fit_rate(const RunSeries& series, double tail_fraction, ErrorSeries which) {
  require(tail_fraction > 0.0 && tail_fraction <= 1.0, "tail fraction must lie in (0, 1]");
  const std::size_t positive_start = static_cast<std::size_t>(
      std::upper_bound(series.checkpoints.begin(), series.checkpoints.end(), std::uint64_t{0}) -
      series.checkpoints.begin());
  const std::size_t n = series.size() - positive_start;
  const auto tail = static_cast<std::size_t>(std::ceil(tail_fraction * double(n)));
  return ols_log_log(series, series.size() - std::min(tail, n), series.size(), which);
}

RateFit fit_rate_window(const RunSeries& series, std::uint64_t t_min, std::uint64_t t_max, ErrorSeries which) {
  require(t_min >= 1 && t_min <= t_max, "rate window needs 1 <= t_min <= t_max");
  const auto& c = series.checkpoints;
  const auto first = std::lower_bound(c.begin(), c.end(), t_min) - c.begin();
  const auto last = std::upper_bound(c.begin(), c.end(), t_max) - c.begin();
  return ols_log_log(series, static_cast<std::size_t>(first), static_cast<std::size_t>(last), which);
}

PresetScale preset_scale(double scale) {
  require(scale > 0.0 && scale <= 1.0, "preset scale must lie in (0, 1]");
  // Power law through (0.1, desk value) and (1, full-scale value).
  auto map = [&](double full, double desk, double floor) {
    const double v = full * std::pow(scale, std::log10(full / desk));
    return std::max(floor, std::round(v));
  };
  PresetScale p;
  p.garnet.n_states = static_cast<std::size_t>(map(500, 50, 4));
  p.garnet.n_actions = static_cast<std::size_t>(map(20, 5, 2));
  p.garnet.branching = std::min(p.garnet.n_states, static_cast<std::size_t>(map(50, 10, 2)));
  p.garnet.features = std::min(p.garnet.n_states, static_cast<std::size_t>(map(20, 8, 2)));
  p.garnet.gamma = 0.95;
  p.garnet.seed = 2019;
  p.runs = static_cast<std::uint64_t>(map(500, 100, 1));
  p.steps = static_cast<std::uint64_t>(map(5e5, 2e5, 100));
  return p;
}

std::vector<std::string> preset_names() { return {"fig1a", "fig1b", "fig1c", "fig1d", "fig2", "fig3"}; }

BlockwiseSpec tuned_blockwise_spec() {
  BlockwiseSpec b;
  b.relative_target = true;
  // Ten halvings of eps_0; C7 and |lambda_x| calibrated from the constant-stepsize
  // noise floor (about 11 alpha) and |lambda_theta| (about 0.1) on the desk instance.
  b.eps_target = 1.0 / 1024.0;
  b.eta = 1.0;
  b.options.lambda_x_override = 0.1;
  b.options.C7_override = 2.5;
  return b;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

ExperimentConfig base_config(const PresetScale& p, const std::string& label, ScheduleSpec schedule) {
  ExperimentConfig c;
  c.label = label;
  c.garnet = p.garnet;
  c.schedule = schedule;
  c.steps = p.steps;
  c.runs = p.runs;
  c.base_seed = 20190;
  return c;
}

ExperimentConfig diminishing_config(const PresetScale& p, Diminishing d) {
  return base_config(p, "diminishing c=" + fmt(d.c_alpha) + " sigma=" + fmt(d.sigma) + " nu=" + fmt(d.nu), d);
}

ExperimentConfig constant_config(const PresetScale& p, Constant k) {
  return base_config(p, "constant alpha=" + fmt(k.alpha) + " beta=" + fmt(k.beta), k);
}

}  // namespace

std::vector<ExperimentConfig> preset(const std::string& name, double scale) {
  const PresetScale p = preset_scale(scale);
  std::vector<ExperimentConfig> out;
  struct Fig1 {
    const char* name;
    double c, sigma;
  };
  static constexpr Fig1 kFig1[] = {{"fig1a", 0.03, 0.15}, {"fig1b", 0.18, 0.30}, {"fig1c", 1.0, 0.45}, {"fig1d", 4.0, 0.60}};
  static constexpr double kRatios[] = {1.0 / 3.0, 1.0 / 2.0, 5.0 / 9.0, 2.0 / 3.0, 5.0 / 6.0, 1.0};
  for (const Fig1& f : kFig1) {
    if (name != f.name) continue;
    for (double r : kRatios) out.push_back(diminishing_config(p, {f.c, f.c, f.sigma, r * f.sigma}));
    return out;
  }
  const Diminishing best{1.8, 1.8, 0.45, 0.30};
  if (name == "fig2") {
    out.push_back(diminishing_config(p, best));
    for (Constant k : {Constant{0.01, 0.006}, Constant{0.02, 0.008}, Constant{0.05, 0.02}, Constant{0.1, 0.02}})
      out.push_back(constant_config(p, k));
    return out;
  }
  if (name == "fig3") {
    out.push_back(base_config(p, "blockwise", tuned_blockwise_spec()));
    out.push_back(diminishing_config(p, best));
    out.push_back(constant_config(p, {0.1, 0.02}));
    return out;
  }
  fail(ErrorKind::kUnknownPreset, "unknown preset '" + name + "'");
}

std::string format_csv(const RunSeries& s, const std::string& config_json) {
  require(config_json.find('\n') == std::string::npos, "config JSON must be a single line");
  std::string out = "# config: " + config_json + "\n";
  if (!s.block_boundaries.empty()) {
    out += "# blocks: ";
    for (std::size_t k = 0; k < s.block_boundaries.size(); ++k) {
      if (k) out += ',';
      out += std::to_string(s.block_boundaries[k]);
    }
    out += '\n';
  }
  out += kCsvHeader;
  out += '\n';
  char buf[160];
  for (std::size_t k = 0; k < s.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(s.checkpoints[k]), s.mean_theta_sq_err[k], s.se_theta_sq_err[k],
                  s.mean_z_sq_err[k], s.se_z_sq_err[k]);
    out += buf;
  }
  return out;
}

void write_csv(const std::filesystem::path& path, const RunSeries& series, const std::string& config_json) {
  const std::string text = format_csv(series, config_json);
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIoError, "cannot open " + path.string() + " for writing");
  f << text;
  if (!f) fail(ErrorKind::kIoError, "write to " + path.string() + " failed");
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) parts.push_back(cur);
  if (!line.empty() && line.back() == sep) parts.emplace_back();
  return parts;
}

}  // namespace

CsvData parse_csv(const std::string& text) {
  CsvData data;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  auto bad = [&](const std::string& why) {
    fail(ErrorKind::kInvalidArgument, "CSV line " + std::to_string(line_no) + ": " + why);
  };
  auto to_u64 = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) bad("bad integer '" + s + "'");
    return std::stoull(s);
  };
  auto to_double = [&](const std::string& s) -> double {
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(s, &used);
    } catch (const std::exception&) {
      bad("bad number '" + s + "'");
    }
    if (used != s.size()) bad("bad number '" + s + "'");
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (header_seen) bad("comment after the header");
      if (line.rfind("# config: ", 0) == 0) {
        data.config_json = line.substr(10);
      } else if (line.rfind("# blocks: ", 0) == 0) {
        for (const std::string& t : split(line.substr(10), ',')) data.series.block_boundaries.push_back(to_u64(t));
      }
      continue;
    }
    if (!header_seen) {
      if (line != kCsvHeader) bad("expected header '" + std::string(kCsvHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto f = split(line, ',');
    if (f.size() != 5) bad("expected 5 fields, got " + std::to_string(f.size()));
    RunSeries& s = data.series;
    s.checkpoints.push_back(to_u64(f[0]));
    s.mean_theta_sq_err.push_back(to_double(f[1]));
    s.se_theta_sq_err.push_back(to_double(f[2]));
    s.mean_z_sq_err.push_back(to_double(f[3]));
    s.se_z_sq_err.push_back(to_double(f[4]));
  }
  if (!header_seen) fail(ErrorKind::kInvalidArgument, "CSV has no header line");
  if (!data.config_json.empty()) {
    try {
      data.series.runs = json::parse(data.config_json).value("runs", std::uint64_t{0});
    } catch (const json::exception&) {
      fail(ErrorKind::kInvalidArgument, "CSV config preamble is not valid JSON");
    }
  }
  return data;
}

CsvData read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorKind::kIoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace tdclab
