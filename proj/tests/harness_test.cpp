#include "ccgp/harness.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

using namespace ccgp;

namespace {

Environment small_world() {
  Environment env;
  env.bounds = {{0, 0}, {10, 10}};
  env.obstacles.push_back(ConvexShape::box({5, 5}, 1.0, 6.0));
  env.obstacles.push_back(ConvexShape::circle({2.5, 2}, 0.8));
  env.obstacles.push_back(ConvexShape::circle({7.5, 8}, 0.8));
  return env;
}

RobotModel silent_robot() {
  RobotModel r;
  r.linear.M.setZero();
  r.linear.N.setZero();
  return r;
}

ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.bounds = {{0, 0}, {12, 12}};
  c.n_obstacles = 5;
  c.n_environments = 1;
  c.pairs_per_environment = 2;
  c.n_trials = 10;
  c.n_training = 1000;
  c.deltas = {0.05};
  c.planners = {PlannerKind::RrtStar, PlannerKind::Ccgp};
  c.iterations = 400;
  c.max_seconds = std::numeric_limits<double>::infinity();
  c.pair_separation = 5.0;
  c.seed = 3;
  return c;
}

}  // namespace

TEST(Seeds, DerivedStreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) seen.insert(derive_seed(7, {a, b}));
  EXPECT_EQ(seen.size(), 400u);
  EXPECT_EQ(derive_seed(7, {1, 2}), derive_seed(7, {1, 2}));
  EXPECT_NE(derive_seed(7, {1, 2}), derive_seed(7, {2, 1}));
}

TEST(ParallelFor, VisitsEveryIndexOnceAndPropagates) {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](int i) { ++hits[static_cast<std::size_t>(i)]; });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_THROW(parallel_for(10, 3, [](int i) { if (i == 7) throw std::runtime_error("x"); }), std::runtime_error);
}

TEST(Collect, ZeroNoiseRecordsGjkAtEstimate) {
  const auto env = small_world();
  const auto robot = silent_robot();
  const auto ts = collect_training_data(env, robot, 400, 3);
  const auto dist = robot.distance(env);
  ASSERT_EQ(ts.size(), 400);
  for (Eigen::Index i = 0; i < ts.size(); ++i)
    EXPECT_EQ(ts.d(i), dist({ts.X(i, 0), ts.X(i, 1), 0.0})) << i;
}

TEST(Collect, CountBoundsAndProvenance) {
  auto env = small_world();
  env.seed = 99;
  RobotModel robot;
  const auto ts = collect_training_data(env, robot, 2000, 4);
  ASSERT_EQ(ts.size(), 2000);
  ASSERT_EQ(ts.X.cols(), 2);
  for (Eigen::Index i = 0; i < ts.size(); ++i)
    EXPECT_TRUE(env.bounds.contains({ts.X(i, 0), ts.X(i, 1)})) << i;
  EXPECT_EQ(ts.environment_seed, 99u);
  EXPECT_EQ(ts.collection_seed, 4u);
  EXPECT_EQ(ts.plant, PlantKind::Linear);
  EXPECT_THROW(collect_training_data(env, robot, 0, 4), std::invalid_argument);
}

TEST(Collect, DubinsStatesCarryHeading) {
  const auto env = small_world();
  auto cfg = ExperimentConfig::dubins_preset();
  cfg.robot.gp_input = GpInput::PositionHeading;
  const auto ts = collect_training_data(env, cfg.robot, 300, 5, cfg.collect);
  ASSERT_EQ(ts.X.cols(), 3);
  for (Eigen::Index i = 0; i < ts.size(); ++i) {
    EXPECT_LE(std::abs(ts.X(i, 2)), std::numbers::pi + 1e-12);
    EXPECT_TRUE(env.bounds.contains({ts.X(i, 0), ts.X(i, 1)}));
  }
}

// Near a boundary the same estimate maps to different true distances.
TEST(Collect, NoisySamplesSpreadNearObstacles) {
  const auto env = small_world();
  RobotModel robot;
  robot.linear.N = 0.05 * Eigen::Matrix2d::Identity();
  const auto ts = collect_training_data(env, robot, 4000, 6);
  const auto dist = robot.distance(env);
  std::vector<double> residual;
  for (Eigen::Index i = 0; i < ts.size(); ++i) {
    const double at_estimate = dist({ts.X(i, 0), ts.X(i, 1), 0.0});
    if (std::abs(at_estimate) < 0.5) residual.push_back(ts.d(i) - at_estimate);
  }
  ASSERT_GT(residual.size(), 50u);
  EXPECT_GT(mean_std(residual).std, 0.05);
}

TEST(Collect, TrueToTruePairingHasNoSpread) {
  const auto env = small_world();
  RobotModel robot;
  CollectOptions opt;
  opt.pairing = Pairing::TrueToTrue;
  const auto ts = collect_training_data(env, robot, 500, 6, opt);
  const auto dist = robot.distance(env);
  for (Eigen::Index i = 0; i < ts.size(); ++i) EXPECT_EQ(ts.d(i), dist({ts.X(i, 0), ts.X(i, 1), 0.0}));
}

// Invariant: same seed, same data.
TEST(Invariant, CollectionIsReproducible) {
  const auto env = small_world();
  RobotModel robot;
  const auto a = collect_training_data(env, robot, 500, 21);
  const auto b = collect_training_data(env, robot, 500, 21);
  const auto c = collect_training_data(env, robot, 500, 22);
  EXPECT_TRUE(a.X == b.X);
  EXPECT_TRUE(a.d == b.d);
  EXPECT_FALSE(a.X == c.X);
}

TEST(Evaluate, OutcomeCountsAndSuccessClearance) {
  const auto env = small_world();
  RobotModel robot;
  PlanningProblem p;
  p.start = {1, 5, 0};
  p.goal.goal = Eigen::Vector3d(9, 5, 0);
  p.goal.radius = 0.5;
  p.bounds = env.bounds;
  p.connect = gjk_connect(env, robot.footprint);
  p.seed = 2;
  const auto r = rrt_star(p);
  ASSERT_TRUE(r.success);
  const auto b = evaluate_plan(r.plan, env, robot, p.goal, 200, 8, 2);
  ASSERT_EQ(b.n_trials(), 200);
  ASSERT_EQ(b.min_distances.size(), 200u);
  // Invariant: the three fractions partition the trials.
  EXPECT_EQ(b.success_rate() + b.collision_rate() + b.timeout_rate(), 1.0);
  for (int i = 0; i < b.n_trials(); ++i)
    if (b.outcomes[static_cast<std::size_t>(i)] == Outcome::Success) {
      EXPECT_GT(b.min_distances[static_cast<std::size_t>(i)], 0.0);
    }
  EXPECT_EQ(b.path_length, r.plan.length);
}

TEST(Evaluate, ResultIndependentOfThreadCount) {
  const auto env = small_world();
  RobotModel robot;
  PlanningProblem p;
  p.start = {1, 5, 0};
  p.goal.goal = Eigen::Vector3d(9, 5, 0);
  p.goal.radius = 0.5;
  p.bounds = env.bounds;
  p.connect = gjk_connect(env, robot.footprint);
  const auto r = rrt_star(p);
  ASSERT_TRUE(r.success);
  const auto a = evaluate_plan(r.plan, env, robot, p.goal, 40, 9, 1);
  const auto b = evaluate_plan(r.plan, env, robot, p.goal, 40, 9, 3);
  EXPECT_EQ(a.outcomes, b.outcomes);
  EXPECT_EQ(a.min_distances, b.min_distances);
}

// Invariant: without noise a collision-free plan is always tracked to the goal.
TEST(Invariant, ZeroNoiseDeterministicPlanAlwaysSucceeds) {
  const auto env = small_world();
  for (PlantKind kind : {PlantKind::Linear, PlantKind::Dubins}) {
    RobotModel robot = kind == PlantKind::Linear ? silent_robot() : ExperimentConfig::dubins_preset().robot;
    robot.dubins.sigma_v = robot.dubins.sigma_w = robot.dubins.sigma_rot = 0.0;
    robot.dubins.N = 1e-18 * Eigen::Matrix3d::Identity();
    robot.linear.N = 1e-18 * Eigen::Matrix2d::Identity();
    PlanningProblem p;
    p.start = {1, 5, 0};
    p.goal.goal = Eigen::Vector3d(9, 5, 0);
    p.goal.radius = 0.5;
    p.bounds = env.bounds;
    p.steering = robot.steering();
    p.connect = gjk_connect(env, robot.footprint, 0.3);
    p.max_iterations = 1500;
    const auto r = rrt_star(p);
    ASSERT_TRUE(r.success) << to_string(kind);
    const auto b = evaluate_plan(r.plan, env, robot, p.goal, 20, 10);
    EXPECT_EQ(b.success_rate(), 1.0) << to_string(kind);
  }
}

TEST(Statistics, QuantileMatchesHandValues) {
  EXPECT_EQ(quantile({3, 1, 2, 4}, 0.5), 2.5);
  EXPECT_EQ(quantile({1, 2, 3, 4, 5}, 0.25), 2.0);
  EXPECT_NEAR(quantile({0, 10}, 0.3), 3.0, 1e-15);
  EXPECT_TRUE(std::isnan(quantile({}, 0.5)));
  const auto q = quartiles({5, 1, 4, 2, 3});
  EXPECT_EQ(q.q1, 2.0);
  EXPECT_EQ(q.median, 3.0);
  EXPECT_EQ(q.q3, 4.0);
  const auto m = mean_std({2, 4, 4, 4, 5, 5, 7, 9});
  EXPECT_EQ(m.mean, 5.0);
  EXPECT_NEAR(m.std, std::sqrt(32.0 / 7.0), 1e-14);
}

TEST(Histogram, CountsEveryValueAndBelowZero) {
  const std::vector<double> v{-0.2, -0.1, 0.0, 0.1, 0.5, 0.9, 1.0};
  const auto h = min_distance_histogram(v, 4);
  ASSERT_EQ(h.edges.size(), 5u);
  ASSERT_EQ(h.counts.size(), 4u);
  EXPECT_EQ(std::accumulate(h.counts.begin(), h.counts.end(), 0), 7);
  EXPECT_EQ(h.counts.back(), 2);  // the maximum lands in the last bin
  EXPECT_NEAR(h.fraction_below_zero, 3.0 / 7.0, 1e-15);
  for (std::size_t i = 1; i < h.edges.size(); ++i) EXPECT_GT(h.edges[i], h.edges[i - 1]);
  EXPECT_THROW(min_distance_histogram(v, 0), std::invalid_argument);
}

TEST(Aggregate, UnplannedPairCountsAsZero) {
  std::vector<SweepRecord> recs(3);
  for (int i = 0; i < 3; ++i) {
    recs[static_cast<std::size_t>(i)].planner = PlannerKind::CcgpStar;
    recs[static_cast<std::size_t>(i)].delta = 0.05;
    recs[static_cast<std::size_t>(i)].pair = i;
  }
  recs[0].planned = true;
  recs[0].success_rate = 1.0;
  recs[0].path_length = 10.0;
  recs[1].planned = true;
  recs[1].success_rate = 0.8;
  recs[1].path_length = 12.0;
  const auto rows = aggregate(recs);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].pairs, 3);
  EXPECT_EQ(rows[0].planned, 2);
  EXPECT_EQ(rows[0].success.median, 0.8);
  EXPECT_EQ(rows[0].length.median, 11.0);
}

// Invariant: quartiles recomputed from the raw records match the report.
TEST(Invariant, SweepQuartilesMatchRawRecords) {
  const auto cfg = tiny_config();
  const auto rep = run_delta_sweep(cfg);
  ASSERT_EQ(rep.records.size(), 4u);
  ASSERT_EQ(rep.rows.size(), 2u);
  for (const auto& r : rep.records) EXPECT_TRUE(r.planned) << to_string(r.planner) << ' ' << r.pair;
  for (const auto& row : rep.rows) {
    std::vector<double> s, l;
    for (const auto& r : rep.records) {
      if (r.planner != row.planner || r.delta != row.delta) continue;
      s.push_back(r.planned ? r.success_rate : 0.0);
      if (r.planned) l.push_back(r.path_length);
      EXPECT_GE(r.success_rate, 0.0);
      EXPECT_LE(r.success_rate, 1.0);
    }
    const auto qs = quartiles(s);
    EXPECT_NEAR(row.success.median, qs.median, 1e-12);
    EXPECT_NEAR(row.success.q1, qs.q1, 1e-12);
    EXPECT_NEAR(row.success.q3, qs.q3, 1e-12);
    EXPECT_LE(row.success.q1, row.success.median);
    EXPECT_LE(row.success.median, row.success.q3);
    if (!l.empty()) {
      EXPECT_NEAR(row.length.median, quantile(l, 0.5), 1e-12);
    }
  }
}

TEST(Sweep, RerunGivesIdenticalCsv) {
  const auto cfg = tiny_config();
  std::ostringstream a, b;
  write_records_csv(a, run_delta_sweep(cfg).records);
  write_records_csv(b, run_delta_sweep(cfg).records);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_NE(a.str().find("ccgp"), std::string::npos);
}

TEST(Density, ReportsOneRowPerCount) {
  auto cfg = tiny_config();
  cfg.pairs_per_environment = 1;
  const auto rows = run_density_study(cfg, {2, 4}, 0.05, {2, 2}, {10, 10}, PlannerKind::Ccgp, 5);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].n_obstacles, 2);
  EXPECT_EQ(rows[1].n_obstacles, 4);
  for (const auto& r : rows) {
    EXPECT_GT(r.edge_seconds.mean, 0.0);
    EXPECT_EQ(r.pairs, 1);
    EXPECT_GE(r.median_accuracy, 0.0);
    EXPECT_LE(r.median_accuracy, 1.0);
  }
}
