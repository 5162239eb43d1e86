// Command-line front end. Stages talk through files under --out:
//   collect -> environment.json, training.json
//   fit     -> model.json
//   plan    -> plans/*.json
//   eval    -> trials/*.csv, histograms/*.csv, records.csv, report.csv, report.json
// Timings and timestamps go to manifest/*.json only, so CSV bodies are
// byte-identical across reruns with the same seed.

#include "ccgp/io.hpp"
#include "ccgp/shgo_suite.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>

namespace fs = std::filesystem;
using namespace ccgp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitViolation = 1;
constexpr int kExitConfig = 2;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out;
  bool full_scale{false};
  bool quiet{false};
};

RunConfig load_config(const Globals& g) {
  RunConfig rc = g.config.empty() ? RunConfig{} : config_from_file(g.config);
  if (g.seed) rc.experiment.seed = *g.seed;
  if (g.jobs) rc.experiment.jobs = *g.jobs;
  if (g.out) rc.out_dir = *g.out;
  if (g.full_scale) rc.apply_full_scale();
  rc.validate();
  return rc;
}

std::string path_in(const RunConfig& rc, const std::string& name) { return (fs::path(rc.out_dir) / name).string(); }

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

/// Provenance and timing for one command; the only place wall-clock values land.
void write_manifest(const RunConfig& rc, const std::string& command, double seconds, json extra = json::object()) {
  json j = header("ccgp-manifest");
  j["command"] = command;
  j["finished"] = timestamp();
  j["wall_seconds"] = seconds;
  j["seed"] = rc.experiment.seed;
  j["config"] = config_to_ini(rc);
  j["details"] = std::move(extra);
  write_json_file(path_in(rc, "manifest/" + command + ".json"), j);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Progress progress_printer(const Globals& g, const std::string& label) {
  if (g.quiet) return {};
  return [label](int done, int total) { std::cerr << '\r' << label << ' ' << done << '/' << total << (done == total ? "\n" : "") << std::flush; };
}

std::string planner_tag(PlannerKind k) {
  std::string s = to_string(k);
  if (!s.empty() && s.back() == '*') s = s.substr(0, s.size() - 1) + "star";
  return s;
}

std::string plan_name(const PlanFile& p) {
  std::ostringstream os;
  os << "e" << p.environment << "_p" << std::setw(3) << std::setfill('0') << p.pair << '_' << planner_tag(p.planner);
  if (is_chance(p.planner)) os << "_d" << shortest(p.delta);
  return os.str();
}

Scenario load_scenario(const RunConfig& rc, const std::string& env_path, const std::string& model_path) {
  Scenario sc;
  sc.env = environment_from_json(read_json_file(env_path));
  auto loaded = model_from_json(read_json_file(model_path));
  sc.training = std::move(loaded.training);
  sc.model = std::move(loaded.model);
  sc.length_scale.length_scale = sc.model.kernel().length_scale;
  if (sc.training.plant != rc.experiment.robot.kind)
    throw ConfigError("model was trained for the " + std::string(to_string(sc.training.plant)) +
                      " plant but the config selects " + to_string(rc.experiment.robot.kind));
  return sc;
}

std::vector<std::string> plan_files(const std::vector<std::string>& inputs) {
  std::vector<std::string> out;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      for (const auto& e : fs::directory_iterator(in))
        if (e.path().extension() == ".json") out.push_back(e.path().string());
    } else {
      out.push_back(in);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_dump_defaults(const Globals& g, const std::string& plant) {
  RunConfig rc = g.config.empty() ? RunConfig{} : config_from_file(g.config);
  if (g.config.empty() && plant == "dubins") rc.experiment = ExperimentConfig::dubins_preset();
  if (g.seed) rc.experiment.seed = *g.seed;
  if (g.out) rc.out_dir = *g.out;
  if (g.full_scale) rc.apply_full_scale();
  std::cout << config_to_ini(rc);
  return kExitOk;
}

int cmd_collect(const Globals& g, int env_index) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_config(g);
  const auto& cfg = rc.experiment;
  const std::uint64_t env_seed = derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(env_index),
                                                        static_cast<std::uint64_t>(cfg.n_obstacles)});
  Environment env;
  if (cfg.environment_source == EnvironmentSource::Grid) {
    env = import_occupancy_grid(cfg.grid_file, cfg.grid_resolution);
    env.seed = env_seed;
  } else {
    env = generate_environment(env_seed, cfg.n_obstacles, cfg.bounds, cfg.obstacle_sizes);
  }
  const TrainingSet ts = collect_training_data(env, cfg.robot, cfg.n_training, derive_seed(env_seed, {2}), cfg.collect);
  json envj = environment_to_json(env);
  envj["environment_index"] = env_index;
  write_json_file(path_in(rc, "environment.json"), envj);
  write_json_file(path_in(rc, "training.json"), training_to_json(ts));
  write_manifest(rc, "collect", seconds_since(t0), {{"environment_index", env_index}, {"samples", ts.size()}});
  if (!g.quiet) std::cerr << "collected " << ts.size() << " samples in " << env.obstacles.size() << "-obstacle environment\n";
  return kExitOk;
}

int cmd_fit(const Globals& g, std::string training_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_config(g);
  if (training_path.empty()) training_path = path_in(rc, "training.json");
  const TrainingSet ts = training_from_json(read_json_file(training_path));
  LengthScaleSelection sel;
  const GpDistanceModel m = fit_model(ts, rc.experiment.length_scales, rc.experiment.noise_variance, &sel);
  const LipschitzBound lip = lipschitz_bound(m);
  write_json_file(path_in(rc, "model.json"), model_to_json(m, ts, sel, lip));
  write_manifest(rc, "fit", seconds_since(t0), {{"length_scale", m.kernel().length_scale}});
  if (!g.quiet) {
    std::cerr << "fitted " << m.size() << " states, length scale " << m.kernel().length_scale << '\n';
    if (!lip.valid)
      std::cerr << "Lipschitz bound is vacuous (lambda_max * n = " << lip.lambda_max * static_cast<double>(lip.n)
                << " >= 1); CONNECT uses the default sample count\n";
  }
  return kExitOk;
}

int cmd_plan(const Globals& g, int env_index, std::string env_path, std::string model_path) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_config(g);
  const auto& cfg = rc.experiment;
  if (env_path.empty()) env_path = path_in(rc, "environment.json");
  if (model_path.empty()) model_path = path_in(rc, "model.json");
  const Scenario sc = load_scenario(rc, env_path, model_path);
  const auto e = static_cast<std::uint64_t>(env_index);
  const auto pairs = sample_pairs(sc, cfg, cfg.pairs_per_environment, derive_seed(cfg.seed, {3, e}));
  int total = 0, done = 0, planned = 0;
  for (auto k : cfg.planners) total += (is_chance(k) ? static_cast<int>(cfg.deltas.size()) : 1) * static_cast<int>(pairs.size());
  const auto progress = progress_printer(g, "plan");
  json timing = json::array();
  for (int i = 0; i < static_cast<int>(pairs.size()); ++i) {
    const PlanningProblem problem = make_problem(sc, cfg, pairs[static_cast<std::size_t>(i)],
                                                 derive_seed(cfg.seed, {4, e, static_cast<std::uint64_t>(i)}));
    for (auto k : cfg.planners) {
      for (double delta : is_chance(k) ? cfg.deltas : std::vector<double>{0.0}) {
        const PlanResult res = run_planner(k, sc, cfg, problem, delta);
        PlanFile pf;
        pf.planner = k;
        pf.delta = delta;
        pf.environment = env_index;
        pf.pair = i;
        pf.plant = cfg.robot.kind;
        pf.start = problem.start;
        pf.goal = problem.goal;
        pf.success = res.success;
        pf.failure = res.failure;
        pf.plan = res.plan;
        pf.iterations = res.stats.iterations;
        pf.connect_calls = res.stats.connect_calls;
        pf.tree_size = res.stats.tree_size;
        planned += res.success;
        write_json_file(path_in(rc, "plans/" + plan_name(pf) + ".json"), plan_to_json(pf));
        timing.push_back({{"plan", plan_name(pf)}, {"seconds", res.stats.wall_seconds}});
        if (progress) progress(++done, total);
      }
    }
  }
  write_manifest(rc, "plan", seconds_since(t0), {{"plans", timing}});
  if (!g.quiet) std::cerr << planned << '/' << total << " runs produced a plan\n";
  return kExitOk;
}

int cmd_eval(const Globals& g, std::vector<std::string> inputs, std::string env_path, int bins) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_config(g);
  const auto& cfg = rc.experiment;
  if (env_path.empty()) env_path = path_in(rc, "environment.json");
  if (inputs.empty()) inputs.push_back(path_in(rc, "plans"));
  const Environment env = environment_from_json(read_json_file(env_path));
  const auto files = plan_files(inputs);
  if (files.empty()) throw ConfigError("no plan files found");

  std::vector<SweepRecord> records;
  std::vector<std::string> problems;
  const auto progress = progress_printer(g, "eval");
  for (std::size_t f = 0; f < files.size(); ++f) {
    const PlanFile pf = plan_from_json(read_json_file(files[f]));
    if (pf.plant != cfg.robot.kind) throw ConfigError(files[f] + ": plan is for a different plant");
    SweepRecord rec;
    rec.environment = pf.environment;
    rec.pair = pf.pair;
    rec.planner = pf.planner;
    rec.delta = pf.delta;
    rec.iterations = pf.iterations;
    rec.connect_calls = pf.connect_calls;
    rec.tree_size = pf.tree_size;
    rec.planned = pf.success && !pf.plan.segments.empty();
    if (rec.planned) {
      rec.path_length = pf.plan.length;
      if (is_chance(pf.planner)) rec.min_c_hat = *std::min_element(pf.plan.c_hat.begin(), pf.plan.c_hat.end());
      const auto e = static_cast<std::uint64_t>(pf.environment), pi = static_cast<std::uint64_t>(pf.pair);
      const TrialBatch b = evaluate_plan(pf.plan, env, cfg.robot, pf.goal, cfg.n_trials, derive_seed(cfg.seed, {5, e, pi}), cfg.jobs);
      rec.success_rate = b.success_rate();
      rec.collision_rate = b.collision_rate();
      rec.timeout_rate = b.timeout_rate();
      // Invariants of a trial batch.
      if (b.success_rate() + b.collision_rate() + b.timeout_rate() != 1.0)
        problems.push_back(files[f] + ": outcome fractions do not sum to 1");
      for (int i = 0; i < b.n_trials(); ++i)
        if (b.outcomes[static_cast<std::size_t>(i)] == Outcome::Success && !(b.min_distances[static_cast<std::size_t>(i)] > 0.0))
          problems.push_back(files[f] + ": trial " + std::to_string(i) + " succeeded with min distance <= 0");
      std::ostringstream trials, hist;
      write_trials_csv(trials, b);
      write_histogram_csv(hist, min_distance_histogram(b.min_distances, bins));
      const std::string name = fs::path(files[f]).stem().string();
      write_text_file(path_in(rc, "trials/" + name + ".csv"), trials.str());
      write_text_file(path_in(rc, "histograms/" + name + ".csv"), hist.str());
    }
    records.push_back(std::move(rec));
    if (progress) progress(static_cast<int>(f + 1), static_cast<int>(files.size()));
  }
  ExperimentReport rep;
  rep.records = records;
  rep.rows = aggregate(records);
  rep.environment = "environment seed " + std::to_string(env.seed) + ", " + std::to_string(env.obstacles.size()) + " obstacles";
  for (const auto& row : rep.rows) {
    std::vector<double> s;
    for (const auto& r : records)
      if (r.planner == row.planner && r.delta == row.delta) s.push_back(r.planned ? r.success_rate : 0.0);
    const Quartiles q = quartiles(s);
    if (std::abs(q.median - row.success.median) > 1e-12 || !(row.success.q1 <= row.success.median && row.success.median <= row.success.q3))
      problems.push_back(std::string("report row ") + to_string(row.planner) + ": quartiles inconsistent");
  }
  std::ostringstream rec_csv, rep_csv;
  write_records_csv(rec_csv, records);
  write_report_csv(rep_csv, rep.rows);
  write_text_file(path_in(rc, "records.csv"), rec_csv.str());
  write_text_file(path_in(rc, "report.csv"), rep_csv.str());
  write_json_file(path_in(rc, "report.json"), report_to_json(rep));
  write_manifest(rc, "eval", seconds_since(t0), {{"plans", files.size()}});
  if (!g.quiet) std::cout << rep_csv.str();
  for (const auto& p : problems) std::cerr << "invariant violation: " << p << '\n';
  return problems.empty() ? kExitOk : kExitViolation;
}

int cmd_verify(const Globals& g, std::vector<std::string> inputs, std::string model_path, std::optional<double> delta,
               int points, double tolerance) {
  const RunConfig rc = load_config(g);
  if (model_path.empty()) model_path = path_in(rc, "model.json");
  if (inputs.empty()) inputs.push_back(path_in(rc, "plans"));
  const auto loaded = model_from_json(read_json_file(model_path));
  json out = header("ccgp-verify");
  out["points_per_edge"] = points;
  out["tolerance"] = tolerance;
  out["plans"] = json::array();
  std::size_t violations = 0, audited = 0;
  for (const auto& file : plan_files(inputs)) {
    const PlanFile pf = plan_from_json(read_json_file(file));
    if (!pf.success || !is_chance(pf.planner)) continue;
    const double d = delta.value_or(pf.delta);
    const AuditReport a = audit_plan(loaded.model, pf.plan, d, points, tolerance, rc.experiment.robot.gp_input);
    ++audited;
    violations += a.violations.size();
    json v = json::array();
    for (const auto& x : a.violations) v.push_back({{"edge", x.edge}, {"t", x.t}, {"g", x.g}});
    out["plans"].push_back({{"file", file}, {"delta", d}, {"threshold", a.threshold}, {"edges", a.edges},
                            {"min_g", num(a.min_g)}, {"violations", v}});
  }
  out["audited"] = audited;
  out["violations"] = violations;
  write_json_file(path_in(rc, "verify.json"), out);
  std::cout << "audited " << audited << " plans at " << points << " points per edge: " << violations << " violations\n";
  return violations == 0 ? kExitOk : kExitViolation;
}

int cmd_bench_shgo(const Globals& g, const std::string& suite, double tolerance) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_config(g);
  if (suite != "standard") throw ConfigError("unknown function suite '" + suite + "' (available: standard)");
  std::ostringstream csv;
  csv << "function,dim,n_samples,shgo_min,oracle_min,gap,minimizers,evaluations\n";
  int failures = 0;
  for (const auto& tf : shgo::standard_suite()) {
    shgo::Options opt;
    opt.n_samples = tf.n_samples;
    const auto r = shgo::minimize(shgo::Objective{tf.fn}, tf.domain, opt);
    const int per_axis = tf.domain.dim() == 1 ? 100000 : 400;
    const auto [x, oracle] = shgo::grid_oracle(tf.fn, tf.domain, per_axis);
    const double gap = std::abs(r.value - oracle);
    failures += gap > tolerance;
    csv << tf.name << ',' << tf.domain.dim() << ',' << tf.n_samples << ',' << format_double(r.value) << ','
        << format_double(oracle) << ',' << format_double(gap) << ',' << r.minimizers << ',' << r.evaluations << '\n';
  }
  write_text_file(path_in(rc, "bench_shgo.csv"), csv.str());
  write_manifest(rc, "bench-shgo", seconds_since(t0));
  std::cout << csv.str();
  return failures == 0 ? kExitOk : kExitViolation;
}

int cmd_sweep(const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_config(g);
  const ExperimentReport rep = run_delta_sweep(rc.experiment, progress_printer(g, "sweep"));
  std::ostringstream rec_csv, rep_csv;
  write_records_csv(rec_csv, rep.records);
  write_report_csv(rep_csv, rep.rows);
  write_text_file(path_in(rc, "records.csv"), rec_csv.str());
  write_text_file(path_in(rc, "report.csv"), rep_csv.str());
  write_json_file(path_in(rc, "report.json"), report_to_json(rep));
  json timing = json::array();
  for (const auto& r : rep.records)
    timing.push_back({{"environment", r.environment}, {"pair", r.pair}, {"planner", to_string(r.planner)},
                      {"delta", r.delta}, {"seconds", r.planning_seconds}});
  write_manifest(rc, "sweep", seconds_since(t0), {{"plans", timing}});
  if (!g.quiet) std::cout << rep_csv.str();
  return kExitOk;
}

int cmd_density(const Globals& g) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig rc = load_config(g);
  ExperimentConfig cfg = rc.experiment;
  cfg.pairs_per_environment = rc.density.pairs;
  const auto rows = run_density_study(cfg, rc.density.obstacle_counts, rc.density.delta, rc.density.start_mean,
                                      rc.density.goal_mean, rc.density.planner, rc.density.segments,
                                      progress_printer(g, "density"));
  std::ostringstream csv;
  write_density_csv(csv, rows);
  write_text_file(path_in(rc, "density.csv"), csv.str());
  // Timings are hardware-specific, so they live in the JSON next to the manifest.
  write_json_file(path_in(rc, "density.json"), density_to_json(rows));
  write_manifest(rc, "density", seconds_since(t0));
  if (!g.quiet) {
    std::cout << "n_obstacles,edge_seconds_mean,edge_seconds_std,planning_seconds_mean,median_accuracy\n";
    for (const auto& r : rows)
      std::cout << r.n_obstacles << ',' << r.edge_seconds.mean << ',' << r.edge_seconds.std << ','
                << r.planning_seconds.mean << ',' << r.median_accuracy << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Chance-constrained GP motion planning toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "INI config file (see dump-defaults)")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "Master seed");
  app.add_option("--jobs", g.jobs, "Worker threads for Monte-Carlo trials")->check(CLI::PositiveNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_flag("--full-scale", g.full_scale, "200 pairs and 100 trials per plan");
  app.add_flag("-q,--quiet", g.quiet, "No progress output");

  std::string plant = "linear";
  auto* dump = app.add_subcommand("dump-defaults", "Print the effective configuration as INI");
  dump->add_option("--plant", plant, "Baseline preset")->check(CLI::IsMember({"linear", "dubins"}));

  int env_index = 0;
  auto* collect = app.add_subcommand("collect", "Generate an environment and collect GP training data");
  collect->add_option("--env", env_index, "Environment index within the seed stream");

  std::string training;
  auto* fit = app.add_subcommand("fit", "Fit the GP distance model");
  fit->add_option("--training", training, "Training set (default <out>/training.json)");

  std::string env_path, model_path;
  auto* plan = app.add_subcommand("plan", "Plan every (pair, planner, delta)");
  plan->add_option("--env", env_index, "Environment index within the seed stream");
  plan->add_option("--environment", env_path, "Environment file (default <out>/environment.json)");
  plan->add_option("--model", model_path, "Model file (default <out>/model.json)");

  std::vector<std::string> plans;
  int bins = 20;
  auto* eval = app.add_subcommand("eval", "Monte-Carlo evaluation of plan files");
  eval->add_option("plans", plans, "Plan files or directories (default <out>/plans)");
  eval->add_option("--environment", env_path, "Environment file (default <out>/environment.json)");
  eval->add_option("--bins", bins, "Histogram bins")->check(CLI::PositiveNumber);

  std::optional<double> delta;
  int points = 1000;
  double tolerance = 1e-3;
  auto* verify = app.add_subcommand("verify", "Dense audit of chance-constrained plans");
  verify->add_option("plans", plans, "Plan files or directories (default <out>/plans)");
  verify->add_option("--model", model_path, "Model file (default <out>/model.json)");
  verify->add_option("--delta", delta, "Chance bound (default: the one each plan was made with)");
  verify->add_option("--points", points, "Grid points per edge")->check(CLI::Range(2, 10000000));
  verify->add_option("--tolerance", tolerance, "Allowed shortfall below c");

  std::string suite = "standard";
  double gap = 1e-4;
  auto* bench = app.add_subcommand("bench-shgo", "SHGO against a dense-grid oracle");
  bench->add_option("suite", suite, "Function suite");
  bench->add_option("--tolerance", gap, "Largest accepted gap");

  auto* sweep = app.add_subcommand("sweep", "Whole delta sweep in one process");
  auto* density = app.add_subcommand("density", "Obstacle-density study");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*dump) return cmd_dump_defaults(g, plant);
    if (*collect) return cmd_collect(g, env_index);
    if (*fit) return cmd_fit(g, training);
    if (*plan) return cmd_plan(g, env_index, env_path, model_path);
    if (*eval) return cmd_eval(g, plans, env_path, bins);
    if (*verify) return cmd_verify(g, plans, model_path, delta, points, tolerance);
    if (*bench) return cmd_bench_shgo(g, suite, gap);
    if (*sweep) return cmd_sweep(g);
    if (*density) return cmd_density(g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const FormatError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitViolation;
  }
  return kExitConfig;
}
