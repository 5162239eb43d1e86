#pragma once

#include "ccgp/chance.hpp"
#include "ccgp/geometry.hpp"
#include "ccgp/gp.hpp"
#include "ccgp/planners.hpp"
#include "ccgp/robots.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace ccgp {

// ---------------------------------------------------------------------------
// Seeds and parallel loops

/// SplitMix64 finalizer; mixes a master seed with stream indices.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> stream) {
  std::uint64_t s = mix_seed(master);
  for (auto v : stream) s = mix_seed(s ^ mix_seed(v + 0x632be59bd9b4e019ULL));
  return s;
}

/// Runs body(i) for i in [0, n) on up to `jobs` threads. Iterations must be independent.
inline void parallel_for(int n, int jobs, const std::function<void(int)>& body) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr err;
  std::mutex err_mutex;
  for (int t = 0; t < jobs; ++t)
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

// ---------------------------------------------------------------------------
// Robot bundle

enum class PlantKind { Linear, Dubins };

inline const char* to_string(PlantKind k) { return k == PlantKind::Linear ? "linear" : "dubins"; }

inline PlantKind plant_kind_from_string(const std::string& s) {
  if (s == "linear") return PlantKind::Linear;
  if (s == "dubins") return PlantKind::Dubins;
  throw std::invalid_argument("unknown plant '" + s + "'");
}

/// Plant, footprint, controller weights and the planner settings that go with them.
struct RobotModel {
  PlantKind kind{PlantKind::Linear};
  LinearPlant linear;
  DubinsPlant dubins;
  ConvexShape footprint = ConvexShape::circle({0.0, 0.0}, 0.2);
  /// Linear tracker: reference points per metre is 1 / spacing.
  double reference_spacing{0.8};
  double lqr_q{1.0};
  double lqr_r{1.0};
  double eta{1.0};
  GpInput gp_input{GpInput::Position};

  int state_dim() const { return gp_input == GpInput::Position ? 2 : 3; }

  Steering steering() const {
    return {kind == PlantKind::Linear ? SteerMode::Linear : SteerMode::Dubins, eta, dubins.rho};
  }

  DistanceFn distance(const Environment& env) const {
    return [&env, shape = footprint](const Eigen::Vector3d& x) {
      return distance_to_collision(env, RobotFootprint{shape, {x(0), x(1), x(2)}});
    };
  }

  Eigen::Matrix2d linear_gain() const {
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
    return lqr_gain(I, I, lqr_q * I, lqr_r * I);
  }
};

// ---------------------------------------------------------------------------
// Training data

/// Which states enter the GP: the filter estimate (default) or the true state.
enum class Pairing { EstimateToTrue, TrueToTrue };

struct TrainingSet {
  Eigen::MatrixXd X;  // one state per row
  Eigen::VectorXd d;
  std::uint64_t environment_seed{0};
  PlantKind plant{PlantKind::Linear};
  std::uint64_t collection_seed{0};
  Pairing pairing{Pairing::EstimateToTrue};

  Eigen::Index size() const { return d.size(); }
};

struct CollectOptions {
  Pairing pairing{Pairing::EstimateToTrue};
  /// A walk restarts after this many steps even without a collision.
  int max_walk_steps{50};
  /// Keep one step in this many; slow plants need it to spread the samples.
  int record_every{1};
};

namespace detail {

inline Eigen::Vector3d random_free_state(const Environment& env, const RobotModel& robot, Rng& rng,
                                         double clearance = 0.0) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const auto& b = env.bounds;
  const auto dist = robot.distance(env);
  for (int attempt = 0; attempt < 100000; ++attempt) {
    const Eigen::Vector3d x(b.min.x() + u(rng) * b.width(), b.min.y() + u(rng) * b.height(),
                            -std::numbers::pi + 2.0 * std::numbers::pi * u(rng));
    const double wall = std::min({x(0) - b.min.x(), b.max.x() - x(0), x(1) - b.min.y(), b.max.y() - x(1)}) -
                        robot.footprint.bounding_radius();
    if (wall > clearance && dist(x) > clearance) return x;
  }
  throw std::runtime_error("no free state found");
}

/// Filter step; a plant with exact sensing reads the state directly.
inline Estimate filter_linear(const Estimate& e, const LinearPlant& p, const Eigen::Vector2d& u,
                              const Eigen::Vector2d& z) {
  if (p.N.isZero(0.0)) return {z, Eigen::Matrix2d::Zero()};
  return kalman_step(e, p, u, z);
}

inline Estimate filter_dubins(const Estimate& e, const DubinsPlant& p, double w, const Eigen::Vector3d& z) {
  if (p.N.isZero(0.0)) return {z, Eigen::Matrix3d::Zero()};
  return ekf_step(e, p, w, z);
}

}  // namespace detail

/**
 * @brief Random-walk data collection: uniform random controls, restart on
 * collision, boundary exit or walk length. Records (input state, distance at
 * the true state) for every step whose input lies in the workspace.
 */
inline TrainingSet collect_training_data(const Environment& env, const RobotModel& robot, int n_samples,
                                         std::uint64_t seed, CollectOptions opt = {}) {
  if (n_samples < 1) throw std::invalid_argument("n_samples must be >= 1");
  if (opt.record_every < 1 || opt.max_walk_steps < 1) throw std::invalid_argument("walk settings must be >= 1");
  TrainingSet ts;
  ts.X.resize(n_samples, robot.state_dim());
  ts.d.resize(n_samples);
  ts.environment_seed = env.seed;
  ts.plant = robot.kind;
  ts.collection_seed = seed;
  ts.pairing = opt.pairing;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto dist = robot.distance(env);
  int count = 0;
  while (count < n_samples) {
    Eigen::Vector3d x = detail::random_free_state(env, robot, rng);
    Estimate est;
    if (robot.kind == PlantKind::Linear)
      est = {x.head<2>(), robot.linear.N};
    else
      est = {x, robot.dubins.N};
    for (int step = 0; step < opt.max_walk_steps && count < n_samples; ++step) {
      Eigen::Vector3d xhat;
      if (robot.kind == PlantKind::Linear) {
        const Eigen::Vector2d uu = robot.linear.u_max * Eigen::Vector2d(u(rng), u(rng));
        const auto s = robot.linear.step(x.head<2>(), uu, rng);
        x = Eigen::Vector3d(s.x(0), s.x(1), 0.0);
        est = detail::filter_linear(est, robot.linear, uu, s.z);
        xhat = Eigen::Vector3d(est.x(0), est.x(1), 0.0);
      } else {
        const double w = robot.dubins.v / robot.dubins.rho * u(rng);
        x = robot.dubins.step(x, w, rng);
        est = detail::filter_dubins(est, robot.dubins, w, robot.dubins.observe(x, rng));
        xhat = est.x;
      }
      if (!env.bounds.contains({x(0), x(1)})) break;
      const Eigen::Vector3d& input = opt.pairing == Pairing::EstimateToTrue ? xhat : x;
      if (!env.bounds.contains({input(0), input(1)})) break;
      const double d = dist(x);
      if ((step + 1) % opt.record_every != 0 && d > 0.0) continue;
      ts.X.row(count) = input.head(robot.state_dim()).transpose();
      ts.d(count) = d;
      ++count;
      if (d <= 0.0) break;
    }
  }
  return ts;
}

// ---------------------------------------------------------------------------
// Monte-Carlo evaluation

struct TrialBatch {
  std::vector<Outcome> outcomes;
  std::vector<double> min_distances;
  double path_length{0.0};

  int n_trials() const { return static_cast<int>(outcomes.size()); }
  double fraction(Outcome o) const {
    if (outcomes.empty()) return 0.0;
    return static_cast<double>(std::count(outcomes.begin(), outcomes.end(), o)) / static_cast<double>(outcomes.size());
  }
  double success_rate() const { return fraction(Outcome::Success); }
  double collision_rate() const { return fraction(Outcome::Collision); }
  double timeout_rate() const { return fraction(Outcome::Timeout); }
};

/// Closed-loop rollouts of a plan; trial i draws from its own stream (seed, i).
inline TrialBatch evaluate_plan(const Plan& plan, const Environment& env, const RobotModel& robot,
                                const GoalRegion& goal, int n_trials, std::uint64_t seed, int jobs = 1) {
  if (plan.segments.empty()) throw std::invalid_argument("plan has no segments");
  TrialBatch b;
  b.path_length = plan.length;
  b.outcomes.assign(static_cast<std::size_t>(n_trials), Outcome::Timeout);
  b.min_distances.assign(static_cast<std::size_t>(n_trials), 0.0);
  const auto dist = robot.distance(env);
  TrackOptions opt;
  opt.record = false;
  Reference ref;
  std::vector<Eigen::Matrix<double, 1, 3>> gains;
  Eigen::Matrix2d K;
  if (robot.kind == PlantKind::Linear) {
    ref = linear_reference(plan.segments, robot.reference_spacing);
    K = robot.linear_gain();
  } else {
    ref = dubins_reference(plan.segments, robot.dubins);
    gains = dubins_gains(ref, robot.dubins, robot.lqr_q * Eigen::Matrix3d::Identity(), robot.lqr_r);
  }
  parallel_for(n_trials, jobs, [&](int i) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
    const Rollout r = robot.kind == PlantKind::Linear ? track_linear(ref, robot.linear, K, goal, dist, rng, opt)
                                                      : track_dubins(ref, robot.dubins, gains, goal, dist, rng, opt);
    b.outcomes[static_cast<std::size_t>(i)] = r.outcome;
    b.min_distances[static_cast<std::size_t>(i)] = r.min_distance;
  });
  return b;
}

struct Histogram {
  std::vector<double> edges;
  std::vector<int> counts;
  double fraction_below_zero{0.0};
};

/// Histogram of per-trial minimum distances; values <= 0 count as below zero.
inline Histogram min_distance_histogram(const std::vector<double>& min_distances, int bins = 20) {
  if (bins < 1) throw std::invalid_argument("bins must be >= 1");
  Histogram h;
  if (min_distances.empty()) return h;
  const auto [lo_it, hi_it] = std::minmax_element(min_distances.begin(), min_distances.end());
  const double lo = *lo_it, hi = std::max(*hi_it, lo + 1e-9);
  for (int i = 0; i <= bins; ++i) h.edges.push_back(lo + (hi - lo) * i / bins);
  h.counts.assign(static_cast<std::size_t>(bins), 0);
  int below = 0;
  for (double v : min_distances) {
    const int k = std::min(bins - 1, static_cast<int>((v - lo) / (hi - lo) * bins));
    ++h.counts[static_cast<std::size_t>(k)];
    below += v <= 0.0;
  }
  h.fraction_below_zero = static_cast<double>(below) / static_cast<double>(min_distances.size());
  return h;
}

// ---------------------------------------------------------------------------
// Statistics

struct Quartiles {
  double q1{std::numeric_limits<double>::quiet_NaN()};
  double median{std::numeric_limits<double>::quiet_NaN()};
  double q3{std::numeric_limits<double>::quiet_NaN()};
};

/// Linear-interpolation quantile (the common "type 7" definition).
inline double quantile(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double h = p * static_cast<double>(v.size() - 1);
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - static_cast<double>(i)) * (v[i + 1] - v[i]);
}

inline Quartiles quartiles(const std::vector<double>& v) {
  return {quantile(v, 0.25), quantile(v, 0.5), quantile(v, 0.75)};
}

struct MeanStd {
  double mean{0.0};
  double std{0.0};
};

inline MeanStd mean_std(const std::vector<double>& v) {
  MeanStd m;
  if (v.empty()) return m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------
// Experiments

enum class PlannerKind { Rrt, RrtStar, Ccgp, CcgpStar };

inline const char* to_string(PlannerKind k) {
  switch (k) {
    case PlannerKind::Rrt: return "rrt";
    case PlannerKind::RrtStar: return "rrt*";
    case PlannerKind::Ccgp: return "ccgp";
    case PlannerKind::CcgpStar: return "ccgp*";
  }
  return "?";
}

inline PlannerKind planner_from_string(const std::string& s) {
  for (auto k : {PlannerKind::Rrt, PlannerKind::RrtStar, PlannerKind::Ccgp, PlannerKind::CcgpStar})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown planner '" + s + "'");
}

inline bool is_chance(PlannerKind k) { return k == PlannerKind::Ccgp || k == PlannerKind::CcgpStar; }
inline bool is_star(PlannerKind k) { return k == PlannerKind::RrtStar || k == PlannerKind::CcgpStar; }

/// Where environments come from: random generation or one imported grid map.
enum class EnvironmentSource { Generate, Grid };

struct ExperimentConfig {
  RobotModel robot;
  EnvironmentSource environment_source{EnvironmentSource::Generate};
  /// Generated environments.
  Bounds2 bounds{{0.0, 0.0}, {20.0, 20.0}};
  int n_obstacles{20};
  SizeRange obstacle_sizes{1.0, 3.0};
  /// Imported map (PGM or 0/1 text), metres per cell. Bounds come from the map.
  std::string grid_file;
  double grid_resolution{0.1};
  int n_environments{3};
  int pairs_per_environment{20};
  int n_trials{50};
  int n_training{2000};
  CollectOptions collect;
  std::vector<double> length_scales{0.6};
  /// Inflated so the margin also covers the tracking spread, not only sensing noise.
  double noise_variance{0.3};
  std::vector<double> deltas{0.01, 0.05, 0.1};
  std::vector<PlannerKind> planners{PlannerKind::RrtStar, PlannerKind::CcgpStar};
  int iterations{1000};
  double max_seconds{120.0};
  double goal_radius{0.5};
  double goal_heading_tolerance{std::numeric_limits<double>::infinity()};
  /// Start/goal pairs: minimum GJK clearance and minimum separation.
  double pair_clearance{0.5};
  double pair_separation{10.0};
  std::uint64_t seed{1};
  int jobs{1};

  /// Unicycle settings: longer steering steps, heading-constrained goal and
  /// sparser recording so the walks spread over the map.
  static ExperimentConfig dubins_preset() {
    ExperimentConfig c;
    c.robot.kind = PlantKind::Dubins;
    c.robot.eta = 2.0;
    c.goal_heading_tolerance = std::numbers::pi / 6.0;
    c.collect.record_every = 10;
    c.collect.max_walk_steps = 500;
    return c;
  }
};

/// One environment with its trained model.
struct Scenario {
  Environment env;
  TrainingSet training;
  GpDistanceModel model;
  LengthScaleSelection length_scale;
};

inline GpDistanceModel fit_model(const TrainingSet& ts, const std::vector<double>& length_scales, double noise_variance,
                                 LengthScaleSelection* chosen = nullptr) {
  LengthScaleSelection sel;
  if (length_scales.size() == 1)
    sel.length_scale = length_scales.front();
  else
    sel = select_length_scale(ts.X, ts.d, noise_variance, length_scales);
  if (chosen) *chosen = sel;
  return GpDistanceModel::fit(ts.X, ts.d, RbfKernel{sel.length_scale}, noise_variance);
}

inline Scenario make_scenario(const ExperimentConfig& cfg, int env_index, int n_obstacles) {
  const std::uint64_t env_seed = derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(env_index),
                                                        static_cast<std::uint64_t>(n_obstacles)});
  Environment env;
  if (cfg.environment_source == EnvironmentSource::Grid) {
    env = import_occupancy_grid(cfg.grid_file, cfg.grid_resolution);
    env.seed = env_seed;
  } else {
    env = generate_environment(env_seed, n_obstacles, cfg.bounds, cfg.obstacle_sizes);
  }
  TrainingSet ts = collect_training_data(env, cfg.robot, cfg.n_training, derive_seed(env_seed, {2}), cfg.collect);
  LengthScaleSelection sel;
  GpDistanceModel model = fit_model(ts, cfg.length_scales, cfg.noise_variance, &sel);
  return {std::move(env), std::move(ts), std::move(model), std::move(sel)};
}

struct StartGoal {
  Pose2 start;
  Pose2 goal;
};

/**
 * @brief Random start/goal pairs with GJK clearance, a minimum separation
 * and the point chance check at the strictest bound, so that every planner
 * gets a valid problem.
 */
inline std::vector<StartGoal> sample_pairs(const Scenario& sc, const ExperimentConfig& cfg, int count,
                                           std::uint64_t seed) {
  Rng rng(seed);
  const double strictest = *std::min_element(cfg.deltas.begin(), cfg.deltas.end());
  const ChanceConstraint cc(strictest);
  auto ok = [&](const Eigen::Vector3d& x) {
    const Pose2 q{x(0), x(1), cfg.robot.kind == PlantKind::Linear ? 0.0 : x(2)};
    return point_satisfies(sc.model, q, cc, cfg.robot.gp_input);
  };
  std::vector<StartGoal> out;
  for (int attempt = 0; static_cast<int>(out.size()) < count; ++attempt) {
    if (attempt > 1000 * count) throw std::runtime_error("could not sample enough start/goal pairs");
    const Eigen::Vector3d a = detail::random_free_state(sc.env, cfg.robot, rng, cfg.pair_clearance);
    const Eigen::Vector3d b = detail::random_free_state(sc.env, cfg.robot, rng, cfg.pair_clearance);
    if ((a.head<2>() - b.head<2>()).norm() < cfg.pair_separation) continue;
    if (!ok(a) || !ok(b)) continue;
    const bool lin = cfg.robot.kind == PlantKind::Linear;
    out.push_back({{a(0), a(1), lin ? 0.0 : a(2)}, {b(0), b(1), lin ? 0.0 : b(2)}});
  }
  return out;
}

inline PlanningProblem make_problem(const Scenario& sc, const ExperimentConfig& cfg, const StartGoal& sg,
                                    std::uint64_t seed) {
  PlanningProblem p;
  p.start = sg.start;
  p.goal.goal = Eigen::Vector3d(sg.goal.x, sg.goal.y, sg.goal.theta);
  p.goal.radius = cfg.goal_radius;
  p.goal.heading_tolerance = cfg.goal_heading_tolerance;
  p.bounds = sc.env.bounds;
  p.steering = cfg.robot.steering();
  p.max_iterations = cfg.iterations;
  p.max_seconds = cfg.max_seconds;
  p.seed = seed;
  return p;
}

inline ConnectOptions connect_options(const ExperimentConfig& cfg) {
  ConnectOptions o;
  o.input = cfg.robot.gp_input;
  return o;
}

/// Plans with one planner; the geometric planners use the GJK connect.
inline PlanResult run_planner(PlannerKind kind, const Scenario& sc, const ExperimentConfig& cfg, PlanningProblem p,
                              double delta) {
  if (is_chance(kind)) return ccgp(std::move(p), sc.model, delta, is_star(kind), connect_options(cfg));
  p.connect = gjk_connect(sc.env, cfg.robot.footprint);
  return is_star(kind) ? rrt_star(p) : rrt(p);
}

/// One planner run on one pair, evaluated by Monte Carlo.
struct SweepRecord {
  int environment{0};
  int pair{0};
  PlannerKind planner{PlannerKind::RrtStar};
  double delta{0.0};  // 0 for geometric planners
  bool planned{false};
  double success_rate{0.0};
  double collision_rate{0.0};
  double timeout_rate{0.0};
  double path_length{std::numeric_limits<double>::quiet_NaN()};
  double min_c_hat{std::numeric_limits<double>::quiet_NaN()};
  int iterations{0};
  int connect_calls{0};
  std::size_t tree_size{0};
  double planning_seconds{0.0};
  Plan plan;
  PlanningProblem problem;
};

struct ReportRow {
  PlannerKind planner{PlannerKind::RrtStar};
  double delta{0.0};
  int pairs{0};
  int planned{0};
  Quartiles success;
  Quartiles length;
  MeanStd planning_seconds;
};

struct ExperimentReport {
  std::vector<SweepRecord> records;
  std::vector<ReportRow> rows;
  std::string environment;
  /// Full CONNECT time on random eta-long segments of every environment.
  MeanStd edge_seconds;
};

/// Aggregates records per (planner, delta). A pair without a plan counts as zero success.
inline std::vector<ReportRow> aggregate(const std::vector<SweepRecord>& records) {
  std::vector<ReportRow> rows;
  for (const auto& r : records) {
    const auto it = std::find_if(rows.begin(), rows.end(),
                                 [&](const ReportRow& x) { return x.planner == r.planner && x.delta == r.delta; });
    if (it == rows.end()) {
      ReportRow row;
      row.planner = r.planner;
      row.delta = r.delta;
      rows.push_back(row);
    }
  }
  for (auto& row : rows) {
    std::vector<double> success, length, secs;
    for (const auto& r : records) {
      if (r.planner != row.planner || r.delta != row.delta) continue;
      ++row.pairs;
      success.push_back(r.planned ? r.success_rate : 0.0);
      secs.push_back(r.planning_seconds);
      if (r.planned) {
        ++row.planned;
        length.push_back(r.path_length);
      }
    }
    row.success = quartiles(success);
    row.length = quartiles(length);
    row.planning_seconds = mean_std(secs);
  }
  return rows;
}

/// Progress callback: (records done, records total).
using Progress = std::function<void(int, int)>;

inline SweepRecord plan_and_evaluate(PlannerKind kind, double delta, const Scenario& sc, const ExperimentConfig& cfg,
                                     const StartGoal& sg, int env_index, int pair_index) {
  SweepRecord rec;
  rec.environment = env_index;
  rec.pair = pair_index;
  rec.planner = kind;
  rec.delta = is_chance(kind) ? delta : 0.0;
  const auto e = static_cast<std::uint64_t>(env_index), pi = static_cast<std::uint64_t>(pair_index);
  // Planners share the tree seed so their differences come from CONNECT alone.
  rec.problem = make_problem(sc, cfg, sg, derive_seed(cfg.seed, {4, e, pi}));
  PlanResult res = run_planner(kind, sc, cfg, rec.problem, delta);
  rec.iterations = res.stats.iterations;
  rec.connect_calls = res.stats.connect_calls;
  rec.tree_size = res.stats.tree_size;
  rec.planning_seconds = res.stats.wall_seconds;
  rec.planned = res.success && !res.plan.segments.empty();
  if (!rec.planned) return rec;
  rec.plan = std::move(res.plan);
  rec.path_length = rec.plan.length;
  if (is_chance(kind)) rec.min_c_hat = *std::min_element(rec.plan.c_hat.begin(), rec.plan.c_hat.end());
  const TrialBatch b = evaluate_plan(rec.plan, sc.env, cfg.robot, rec.problem.goal, cfg.n_trials,
                                     derive_seed(cfg.seed, {5, e, pi}), cfg.jobs);
  rec.success_rate = b.success_rate();
  rec.collision_rate = b.collision_rate();
  rec.timeout_rate = b.timeout_rate();
  return rec;
}

/**
 * @brief Every planner (and every delta for the chance planners) on the same
 * start/goal pairs of each environment.
 */
inline std::vector<double> edge_evaluation_times(const Scenario& sc, const ExperimentConfig& cfg, int n_segments,
                                                 std::uint64_t seed, int repeats = 3);

inline ExperimentReport run_delta_sweep(const ExperimentConfig& cfg, const Progress& progress = {},
                                        int edge_segments = 50) {
  ExperimentReport rep;
  int per_pair = 0;
  for (auto k : cfg.planners) per_pair += is_chance(k) ? static_cast<int>(cfg.deltas.size()) : 1;
  const int total = per_pair * cfg.pairs_per_environment * cfg.n_environments;
  std::vector<double> edge_times;
  for (int e = 0; e < cfg.n_environments; ++e) {
    const Scenario sc = make_scenario(cfg, e, cfg.n_obstacles);
    if (edge_segments > 0) {
      const auto t = edge_evaluation_times(sc, cfg, edge_segments, derive_seed(cfg.seed, {6, static_cast<std::uint64_t>(e)}));
      edge_times.insert(edge_times.end(), t.begin(), t.end());
    }
    const auto pairs = sample_pairs(sc, cfg, cfg.pairs_per_environment, derive_seed(cfg.seed, {3, static_cast<std::uint64_t>(e)}));
    for (int i = 0; i < static_cast<int>(pairs.size()); ++i) {
      for (auto k : cfg.planners) {
        const std::vector<double> ds = is_chance(k) ? cfg.deltas : std::vector<double>{0.0};
        for (double delta : ds) {
          rep.records.push_back(plan_and_evaluate(k, delta, sc, cfg, pairs[static_cast<std::size_t>(i)], e, i));
          if (progress) progress(static_cast<int>(rep.records.size()), total);
        }
      }
    }
  }
  rep.rows = aggregate(rep.records);
  rep.edge_seconds = mean_std(edge_times);
  std::ostringstream env;
  if (cfg.environment_source == EnvironmentSource::Grid)
    env << "grid map " << cfg.grid_file << " at " << cfg.grid_resolution << " m per cell";
  else
    env << cfg.n_environments << " random environments, " << cfg.n_obstacles << " obstacles, " << cfg.bounds.width()
        << " x " << cfg.bounds.height() << " m";
  rep.environment = env.str();
  return rep;
}

struct DensityRow {
  int n_obstacles{0};
  MeanStd edge_seconds;
  MeanStd planning_seconds;
  double median_accuracy{0.0};
  int pairs{0};
  int planned{0};
};

/// Edge-evaluation time for random segments of length eta: full SHGO, no early exit.
inline std::vector<double> edge_evaluation_times(const Scenario& sc, const ExperimentConfig& cfg, int n_segments,
                                                 std::uint64_t seed, int repeats) {
  Rng rng(seed);
  std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
  ConnectOptions opt = connect_options(cfg);
  opt.early_reject = false;
  const ChanceConstraint cc(0.05);
  std::vector<double> times;
  const Steering st = cfg.robot.steering();
  for (int i = 0; i < n_segments; ++i) {
    const Eigen::Vector3d a = detail::random_free_state(sc.env, cfg.robot, rng);
    const double th = ang(rng);
    const Pose2 from{a(0), a(1), st.mode == SteerMode::Linear ? 0.0 : a(2)};
    Pose2 to{from.x + cfg.robot.eta * std::cos(th), from.y + cfg.robot.eta * std::sin(th),
             st.mode == SteerMode::Linear ? 0.0 : ang(rng)};
    const Segment s = st.join(from, to);
    double best = std::numeric_limits<double>::infinity();
    for (int r = 0; r < repeats; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      volatile double sink = connect(sc.model, s, cc, opt).c_hat;
      (void)sink;
      best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    times.push_back(best);
  }
  return times;
}

inline MeanStd edge_evaluation_time(const Scenario& sc, const ExperimentConfig& cfg, int n_segments, std::uint64_t seed,
                                    int repeats = 3) {
  return mean_std(edge_evaluation_times(sc, cfg, n_segments, seed, repeats));
}

/**
 * @brief Obstacle-density study: one environment per obstacle count, start
 * and goal drawn around fixed means with 0.5 m spread, CCGP-MP at one delta.
 */
/// Edge-evaluation times at one obstacle count, pooled over cfg.n_environments
/// environments with n_segments segments each. Local training density varies a
/// lot between environments, so one environment says little about the count.
inline std::vector<double> density_edge_times(const ExperimentConfig& cfg, int n_obstacles, int n_segments) {
  std::vector<double> times;
  for (int e = 0; e < cfg.n_environments; ++e) {
    const Scenario sc = make_scenario(cfg, e, n_obstacles);
    const auto t = edge_evaluation_times(
        sc, cfg, n_segments, derive_seed(cfg.seed, {6, static_cast<std::uint64_t>(n_obstacles), static_cast<std::uint64_t>(e)}));
    times.insert(times.end(), t.begin(), t.end());
  }
  return times;
}

inline std::vector<DensityRow> run_density_study(const ExperimentConfig& cfg, const std::vector<int>& obstacle_counts,
                                                 double delta, const Vec2& start_mean, const Vec2& goal_mean,
                                                 PlannerKind planner = PlannerKind::Ccgp, int n_segments = 50,
                                                 const Progress& progress = {}) {
  std::vector<DensityRow> out;
  int done = 0;
  const int total = static_cast<int>(obstacle_counts.size()) * cfg.n_environments * cfg.pairs_per_environment;
  const ChanceConstraint cc(delta);
  for (const int n_obs : obstacle_counts) {
    DensityRow row;
    row.n_obstacles = n_obs;
    std::vector<double> accuracy, secs, edge;
    for (int e = 0; e < cfg.n_environments; ++e) {
      const Scenario sc = make_scenario(cfg, e, n_obs);
      const auto t = edge_evaluation_times(
          sc, cfg, n_segments, derive_seed(cfg.seed, {6, static_cast<std::uint64_t>(n_obs), static_cast<std::uint64_t>(e)}));
      edge.insert(edge.end(), t.begin(), t.end());
      Rng rng(derive_seed(cfg.seed, {7, static_cast<std::uint64_t>(n_obs), static_cast<std::uint64_t>(e)}));
      std::normal_distribution<double> n05(0.0, 0.5);
      const auto dist = cfg.robot.distance(sc.env);
      for (int i = 0; i < cfg.pairs_per_environment; ++i) {
        // Redraw until both ends are free and pass the point check.
        StartGoal sg;
        for (int attempt = 0;; ++attempt) {
          if (attempt > 10000) throw std::runtime_error("density study: no valid start/goal near the means");
          sg.start = {start_mean.x() + n05(rng), start_mean.y() + n05(rng), 0.0};
          sg.goal = {goal_mean.x() + n05(rng), goal_mean.y() + n05(rng), 0.0};
          if (!sc.env.bounds.contains({sg.start.x, sg.start.y}) || !sc.env.bounds.contains({sg.goal.x, sg.goal.y})) continue;
          if (dist({sg.start.x, sg.start.y, 0.0}) <= 0.0 || dist({sg.goal.x, sg.goal.y, 0.0}) <= 0.0) continue;
          if (is_chance(planner) && (!point_satisfies(sc.model, sg.start, cc, cfg.robot.gp_input) ||
                                     !point_satisfies(sc.model, sg.goal, cc, cfg.robot.gp_input)))
            continue;
          break;
        }
        const SweepRecord rec = plan_and_evaluate(planner, delta, sc, cfg, sg, e, i);
        ++row.pairs;
        row.planned += rec.planned;
        accuracy.push_back(rec.planned ? rec.success_rate : 0.0);
        secs.push_back(rec.planning_seconds);
        if (progress) progress(++done, total);
      }
    }
    row.edge_seconds = mean_std(edge);
    row.median_accuracy = quantile(accuracy, 0.5);
    row.planning_seconds = mean_std(secs);
    out.push_back(row);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Post-hoc audit

struct AuditViolation {
  std::size_t edge{0};
  double t{0.0};
  double g{0.0};
};

struct AuditReport {
  double delta{0.0};
  double threshold{0.0};
  double tolerance{0.0};
  int points_per_edge{0};
  std::size_t edges{0};
  std::size_t points{0};
  double min_g{std::numeric_limits<double>::infinity()};
  std::vector<AuditViolation> violations;

  bool ok() const { return violations.empty(); }
};

/// Dense check of every edge: flags each grid point with g(s(t)) < c - tolerance.
inline AuditReport audit_plan(const GpDistanceModel& model, const Plan& plan, double delta, int points_per_edge,
                              double tolerance, GpInput input = GpInput::Position) {
  if (points_per_edge < 2) throw std::invalid_argument("points_per_edge must be >= 2");
  const ChanceConstraint cc(delta);
  AuditReport rep;
  rep.delta = delta;
  rep.threshold = cc.c;
  rep.tolerance = tolerance;
  rep.points_per_edge = points_per_edge;
  rep.edges = plan.segments.size();
  for (std::size_t e = 0; e < plan.segments.size(); ++e) {
    for (int k = 0; k < points_per_edge; ++k) {
      const double t = static_cast<double>(k) / (points_per_edge - 1);
      const double g = model.g(project(plan.segments[e].at(t), input));
      ++rep.points;
      rep.min_g = std::min(rep.min_g, g);
      if (g < cc.c - tolerance) rep.violations.push_back({e, t, g});
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// CSV export (no timing columns, so reruns compare byte for byte)

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // Shortest text that reads back to the same value.
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline void write_records_csv(std::ostream& os, const std::vector<SweepRecord>& records) {
  os << "environment,pair,planner,delta,planned,success_rate,collision_rate,timeout_rate,path_length,min_c_hat,"
        "iterations,connect_calls,tree_size\n";
  for (const auto& r : records)
    os << r.environment << ',' << r.pair << ',' << to_string(r.planner) << ',' << format_double(r.delta) << ','
       << (r.planned ? 1 : 0) << ',' << format_double(r.success_rate) << ',' << format_double(r.collision_rate) << ','
       << format_double(r.timeout_rate) << ',' << format_double(r.path_length) << ',' << format_double(r.min_c_hat)
       << ',' << r.iterations << ',' << r.connect_calls << ',' << r.tree_size << '\n';
}

inline void write_report_csv(std::ostream& os, const std::vector<ReportRow>& rows) {
  os << "planner,delta,pairs,planned,success_q1,success_median,success_q3,length_q1,length_median,length_q3\n";
  for (const auto& r : rows)
    os << to_string(r.planner) << ',' << format_double(r.delta) << ',' << r.pairs << ',' << r.planned << ','
       << format_double(r.success.q1) << ',' << format_double(r.success.median) << ',' << format_double(r.success.q3)
       << ',' << format_double(r.length.q1) << ',' << format_double(r.length.median) << ','
       << format_double(r.length.q3) << '\n';
}

inline void write_trials_csv(std::ostream& os, const TrialBatch& b) {
  os << "trial,outcome,min_distance\n";
  for (int i = 0; i < b.n_trials(); ++i)
    os << i << ',' << to_string(b.outcomes[static_cast<std::size_t>(i)]) << ','
       << format_double(b.min_distances[static_cast<std::size_t>(i)]) << '\n';
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin_low,bin_high,count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i)
    os << format_double(h.edges[i]) << ',' << format_double(h.edges[i + 1]) << ',' << h.counts[i] << '\n';
}

inline void write_density_csv(std::ostream& os, const std::vector<DensityRow>& rows) {
  os << "n_obstacles,pairs,planned,median_accuracy\n";
  for (const auto& r : rows)
    os << r.n_obstacles << ',' << r.pairs << ',' << r.planned << ',' << format_double(r.median_accuracy) << '\n';
}

}  // namespace ccgp
