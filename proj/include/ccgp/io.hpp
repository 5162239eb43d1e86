#pragma once

// File formats: JSON for environments, training sets, models, plans and
// reports; INI for run configuration. Every JSON document carries
// "format" and "version" so stale files fail loudly.

#include "ccgp/harness.hpp"

#include <json.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ccgp {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Small helpers

/// Shortest text that reads back to the same double.
inline std::string shortest(double v) { return format_double(v); }

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t == "inf" || t == "+inf") return std::numeric_limits<double>::infinity();
  if (t == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || r.ec != std::errc() || r.ptr != t.data() + t.size()) throw ConfigError("not a number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

inline void expect_format(const json& j, const std::string& format) {
  if (!j.is_object() || j.value("format", "") != format)
    throw FormatError("expected a '" + format + "' document");
  if (j.value("version", 0) != kFormatVersion)
    throw FormatError(format + ": unsupported version " + std::to_string(j.value("version", 0)));
}

inline json header(const std::string& format) { return {{"format", format}, {"version", kFormatVersion}}; }

inline json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw FormatError("cannot open '" + path + "'");
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot write '" + path + "'");
  f << text;
}

inline void write_json_file(const std::string& path, const json& j) { write_text_file(path, j.dump(1) + "\n"); }

// Non-finite numbers are not JSON; they travel as strings.
inline json num(double v) {
  if (std::isfinite(v)) return v;
  return shortest(v);
}

inline double num(const json& j) {
  if (j.is_string()) return parse_double(j.get<std::string>());
  return j.get<double>();
}

// ---------------------------------------------------------------------------
// Geometry

inline json to_json(const Vec2& v) { return json::array({v.x(), v.y()}); }
inline Vec2 vec2_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json to_json(const Pose2& p) { return json::array({p.x, p.y, p.theta}); }
inline Pose2 pose_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

inline json to_json(const ConvexShape& s) {
  if (s.is_circle()) return {{"type", "circle"}, {"center", to_json(s.as_circle().center)}, {"radius", s.as_circle().radius}};
  json v = json::array();
  for (const auto& p : s.as_polygon().vertices) v.push_back(to_json(p));
  return {{"type", "polygon"}, {"vertices", v}};
}

inline ConvexShape shape_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "circle") return ConvexShape::circle(vec2_from_json(j.at("center")), j.at("radius").get<double>());
  if (type == "polygon") {
    std::vector<Vec2> v;
    for (const auto& p : j.at("vertices")) v.push_back(vec2_from_json(p));
    return ConvexShape::polygon(std::move(v));
  }
  throw FormatError("unknown shape type '" + type + "'");
}

/**
 * Schema: {"format": "ccgp-environment", "version": 1, "seed": uint,
 * "bounds": {"min": [x, y], "max": [x, y]},
 * "obstacles": [{"type": "circle", "center": [x, y], "radius": r} |
 *               {"type": "polygon", "vertices": [[x, y], ...]}]}
 */
inline json environment_to_json(const Environment& env) {
  json j = header("ccgp-environment");
  j["seed"] = env.seed;
  j["bounds"] = {{"min", to_json(env.bounds.min)}, {"max", to_json(env.bounds.max)}};
  j["obstacles"] = json::array();
  for (const auto& o : env.obstacles) j["obstacles"].push_back(to_json(o));
  return j;
}

inline Environment environment_from_json(const json& j) {
  expect_format(j, "ccgp-environment");
  Environment env;
  env.seed = j.at("seed").get<std::uint64_t>();
  env.bounds = {vec2_from_json(j.at("bounds").at("min")), vec2_from_json(j.at("bounds").at("max"))};
  for (const auto& o : j.at("obstacles")) env.obstacles.push_back(shape_from_json(o));
  return env;
}

// ---------------------------------------------------------------------------
// Training data and models

inline const char* to_string(Pairing p) { return p == Pairing::EstimateToTrue ? "estimate" : "true"; }

inline Pairing pairing_from_string(const std::string& s) {
  if (s == "estimate") return Pairing::EstimateToTrue;
  if (s == "true") return Pairing::TrueToTrue;
  throw ConfigError("unknown pairing '" + s + "'");
}

inline json matrix_rows(const Eigen::MatrixXd& X) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < X.cols(); ++k) r.push_back(X(i, k));
    rows.push_back(std::move(r));
  }
  return rows;
}

inline json training_to_json(const TrainingSet& ts) {
  json j = header("ccgp-training");
  j["environment_seed"] = ts.environment_seed;
  j["collection_seed"] = ts.collection_seed;
  j["plant"] = to_string(ts.plant);
  j["pairing"] = to_string(ts.pairing);
  j["count"] = ts.size();
  j["states"] = matrix_rows(ts.X);
  j["distances"] = std::vector<double>(ts.d.data(), ts.d.data() + ts.d.size());
  return j;
}

inline TrainingSet training_from_json(const json& j) {
  expect_format(j, "ccgp-training");
  TrainingSet ts;
  ts.environment_seed = j.at("environment_seed").get<std::uint64_t>();
  ts.collection_seed = j.at("collection_seed").get<std::uint64_t>();
  ts.plant = plant_kind_from_string(j.at("plant").get<std::string>());
  ts.pairing = pairing_from_string(j.at("pairing").get<std::string>());
  const auto& rows = j.at("states");
  const auto d = j.at("distances").get<std::vector<double>>();
  if (rows.size() != d.size() || rows.empty()) throw FormatError("training set: states and distances differ in size");
  const auto dim = static_cast<Eigen::Index>(rows.at(0).size());
  ts.X.resize(static_cast<Eigen::Index>(rows.size()), dim);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (static_cast<Eigen::Index>(rows[i].size()) != dim) throw FormatError("training set: ragged state rows");
    for (Eigen::Index k = 0; k < dim; ++k) ts.X(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)].get<double>();
  }
  ts.d = Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
  if (j.at("count").get<std::size_t>() != d.size()) throw FormatError("training set: count does not match the data");
  return ts;
}

inline json lipschitz_to_json(const LipschitzBound& b) {
  return {{"valid", b.valid}, {"L_q", num(b.L_q)}, {"L_k", num(b.L_k)}, {"composed", num(b.composed())},
          {"lambda_max", b.lambda_max}, {"lambda_max_times_n", b.lambda_max * static_cast<double>(b.n)},
          {"n", b.n}, {"power_iterations", b.iterations}};
}

/// A model file stores the data and hyperparameters; loading refits, which is deterministic.
inline json model_to_json(const GpDistanceModel& m, const TrainingSet& ts, const LengthScaleSelection& sel,
                          const LipschitzBound& lip) {
  json j = header("ccgp-model");
  j["kernel"] = {{"type", "rbf"}, {"length_scale", m.kernel().length_scale}, {"signal_variance", 1.0}};
  j["noise_variance"] = m.noise_variance();
  j["jitter"] = m.jitter();
  j["log_marginal_likelihood"] = log_marginal_likelihood(m);
  json scores = json::array();
  for (const auto& [ell, lml] : sel.scores) scores.push_back({{"length_scale", ell}, {"log_marginal_likelihood", num(lml)}});
  j["length_scale_selection"] = scores;
  j["lipschitz"] = lipschitz_to_json(lip);
  j["training"] = training_to_json(ts);
  return j;
}

struct LoadedModel {
  TrainingSet training;
  GpDistanceModel model;
};

inline LoadedModel model_from_json(const json& j) {
  expect_format(j, "ccgp-model");
  TrainingSet ts = training_from_json(j.at("training"));
  const double ell = j.at("kernel").at("length_scale").get<double>();
  GpDistanceModel m = GpDistanceModel::fit(ts.X, ts.d, RbfKernel{ell}, j.at("noise_variance").get<double>());
  return {std::move(ts), std::move(m)};
}

// ---------------------------------------------------------------------------
// Plans

inline json to_json(const Segment& s) {
  json j;
  if (std::holds_alternative<LineSegment>(s.curve)) {
    const auto& l = std::get<LineSegment>(s.curve);
    j = {{"type", "line"}, {"a", to_json(l.a)}, {"b", to_json(l.b)}};
  } else {
    const auto& d = std::get<DubinsPath>(s.curve);
    j = {{"type", "dubins"}, {"start", to_json(d.start)}, {"rho", d.rho}, {"word", to_string(d.word)},
         {"param", d.param}};
  }
  j["reversed"] = s.reversed;
  return j;
}

inline Segment segment_from_json(const json& j) {
  const std::string type = j.at("type").get<std::string>();
  Segment s;
  if (type == "line") {
    s = Segment::line(vec2_from_json(j.at("a")), vec2_from_json(j.at("b")));
  } else if (type == "dubins") {
    DubinsPath p;
    p.start = pose_from_json(j.at("start"));
    p.rho = j.at("rho").get<double>();
    p.word = dubins_word_from_string(j.at("word").get<std::string>());
    p.param = j.at("param").get<std::array<double, 3>>();
    s = Segment::dubins(p);
  } else {
    throw FormatError("unknown segment type '" + type + "'");
  }
  s.reversed = j.value("reversed", false);
  return s;
}

inline json goal_to_json(const GoalRegion& g) {
  return {{"center", {g.goal(0), g.goal(1), g.goal(2)}}, {"radius", g.radius}, {"heading_tolerance", num(g.heading_tolerance)}};
}

inline GoalRegion goal_from_json(const json& j) {
  GoalRegion g;
  const auto c = j.at("center").get<std::array<double, 3>>();
  g.goal = Eigen::Vector3d(c[0], c[1], c[2]);
  g.radius = j.at("radius").get<double>();
  g.heading_tolerance = num(j.at("heading_tolerance"));
  return g;
}

/// Everything needed to evaluate or audit one planner run.
struct PlanFile {
  PlannerKind planner{PlannerKind::RrtStar};
  double delta{0.0};
  int environment{0};
  int pair{0};
  PlantKind plant{PlantKind::Linear};
  Pose2 start;
  GoalRegion goal;
  bool success{false};
  std::string failure;
  Plan plan;
  int iterations{0};
  int connect_calls{0};
  std::size_t tree_size{0};
};

inline json plan_to_json(const PlanFile& p) {
  json j = header("ccgp-plan");
  j["planner"] = to_string(p.planner);
  j["delta"] = p.delta;
  j["environment"] = p.environment;
  j["pair"] = p.pair;
  j["plant"] = to_string(p.plant);
  j["start"] = to_json(p.start);
  j["goal"] = goal_to_json(p.goal);
  j["success"] = p.success;
  j["failure"] = p.failure;
  j["iterations"] = p.iterations;
  j["connect_calls"] = p.connect_calls;
  j["tree_size"] = p.tree_size;
  json states = json::array(), segs = json::array();
  for (const auto& s : p.plan.states) states.push_back(to_json(s));
  for (const auto& s : p.plan.segments) segs.push_back(to_json(s));
  j["states"] = states;
  j["segments"] = segs;
  j["c_hat"] = json::array();
  for (double c : p.plan.c_hat) j["c_hat"].push_back(num(c));
  j["length"] = p.plan.length;
  return j;
}

inline PlanFile plan_from_json(const json& j) {
  expect_format(j, "ccgp-plan");
  PlanFile p;
  p.planner = planner_from_string(j.at("planner").get<std::string>());
  p.delta = j.at("delta").get<double>();
  p.environment = j.at("environment").get<int>();
  p.pair = j.at("pair").get<int>();
  p.plant = plant_kind_from_string(j.at("plant").get<std::string>());
  p.start = pose_from_json(j.at("start"));
  p.goal = goal_from_json(j.at("goal"));
  p.success = j.at("success").get<bool>();
  p.failure = j.value("failure", "");
  p.iterations = j.value("iterations", 0);
  p.connect_calls = j.value("connect_calls", 0);
  p.tree_size = j.value("tree_size", std::size_t{0});
  for (const auto& s : j.at("states")) p.plan.states.push_back(pose_from_json(s));
  for (const auto& s : j.at("segments")) p.plan.segments.push_back(segment_from_json(s));
  for (const auto& c : j.at("c_hat")) p.plan.c_hat.push_back(num(c));
  p.plan.length = j.at("length").get<double>();
  if (p.success && p.plan.segments.size() + 1 != p.plan.states.size())
    throw FormatError("plan: states and segments do not line up");
  return p;
}

// ---------------------------------------------------------------------------
// Reports

inline json quartiles_to_json(const Quartiles& q) { return {{"q1", num(q.q1)}, {"median", num(q.median)}, {"q3", num(q.q3)}}; }
inline json mean_std_to_json(const MeanStd& m) { return {{"mean", num(m.mean)}, {"std", num(m.std)}}; }

inline json report_to_json(const ExperimentReport& rep) {
  json j = header("ccgp-report");
  j["environment"] = rep.environment;
  j["edge_evaluation_seconds"] = mean_std_to_json(rep.edge_seconds);
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"planner", to_string(r.planner)}, {"delta", r.delta}, {"pairs", r.pairs}, {"planned", r.planned},
                    {"success_rate", quartiles_to_json(r.success)}, {"path_length", quartiles_to_json(r.length)},
                    {"planning_seconds", mean_std_to_json(r.planning_seconds)}});
  j["rows"] = rows;
  return j;
}

inline json density_to_json(const std::vector<DensityRow>& rows) {
  json j = header("ccgp-density");
  j["rows"] = json::array();
  for (const auto& r : rows)
    j["rows"].push_back({{"n_obstacles", r.n_obstacles}, {"edge_evaluation_seconds", mean_std_to_json(r.edge_seconds)},
                         {"planning_seconds", mean_std_to_json(r.planning_seconds)},
                         {"median_accuracy", r.median_accuracy}, {"pairs", r.pairs}, {"planned", r.planned}});
  return j;
}

// ---------------------------------------------------------------------------
// Run configuration (INI)

struct DensityConfig {
  std::vector<int> obstacle_counts{10, 20, 30};
  double delta{0.05};
  Vec2 start_mean{2.0, 2.0};
  Vec2 goal_mean{18.0, 18.0};
  PlannerKind planner{PlannerKind::Ccgp};
  int segments{50};
  int pairs{10};
};

struct RunConfig {
  ExperimentConfig experiment;
  DensityConfig density;
  std::string out_dir{"out"};

  /// Restores the full protocol counts: 200 pairs and 100 trials per plan.
  void apply_full_scale() {
    experiment.pairs_per_environment = 200;
    experiment.n_trials = 100;
  }

  void validate() const {
    const auto& e = experiment;
    if (e.deltas.empty()) throw ConfigError("planner.deltas is empty");
    for (double d : e.deltas)
      if (!(d > 0.0 && d < 0.5)) throw ConfigError("delta " + shortest(d) + " is outside (0, 0.5)");
    if (e.planners.empty()) throw ConfigError("planner.planners is empty");
    if (e.environment_source == EnvironmentSource::Grid) {
      if (e.grid_file.empty()) throw ConfigError("environment.source = grid needs environment.grid_file");
      if (!std::filesystem::exists(e.grid_file)) throw ConfigError("grid file '" + e.grid_file + "' does not exist");
      if (!(e.grid_resolution > 0.0)) throw ConfigError("environment.grid_resolution must be > 0");
    } else {
      if (!e.grid_file.empty()) throw ConfigError("environment.grid_file is set but environment.source = generate");
      if (e.n_obstacles < 0) throw ConfigError("environment.obstacles must be >= 0");
      if (!(e.bounds.width() > 0.0 && e.bounds.height() > 0.0)) throw ConfigError("environment bounds are empty");
    }
    if (e.n_environments < 1 || e.pairs_per_environment < 1 || e.n_trials < 1 || e.n_training < 1)
      throw ConfigError("counts must be >= 1");
    if (e.length_scales.empty()) throw ConfigError("gp.length_scales is empty");
    for (double l : e.length_scales)
      if (!(l > 0.0)) throw ConfigError("length scales must be > 0");
    if (!(e.noise_variance > 0.0)) throw ConfigError("gp.noise_variance must be > 0");
    if (e.iterations < 1) throw ConfigError("planner.iterations must be >= 1");
    if (!(e.robot.eta > 0.0)) throw ConfigError("robot.eta must be > 0");
    if (e.jobs < 1) throw ConfigError("experiment.jobs must be >= 1");
    if (!(density.delta > 0.0 && density.delta < 0.5)) throw ConfigError("density.delta is outside (0, 0.5)");
  }
};

namespace detail {

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + f(v[i]);
  return s;
}

inline double isotropic(const Eigen::MatrixXd& m, const std::string& key) {
  if (!m.isApprox(m(0, 0) * Eigen::MatrixXd::Identity(m.rows(), m.cols()), 0.0))
    throw ConfigError(key + ": only isotropic covariances can be written to a config file");
  return m(0, 0);
}

}  // namespace detail

inline boost::property_tree::ptree config_to_ptree(const RunConfig& rc) {
  using detail::join;
  const auto& e = rc.experiment;
  const auto& r = e.robot;
  boost::property_tree::ptree t;
  auto put = [&t](const std::string& k, const std::string& v) { t.put(k, v); };
  auto d = [](double v) { return shortest(v); };
  put("run.out", rc.out_dir);
  put("run.seed", std::to_string(e.seed));
  put("run.jobs", std::to_string(e.jobs));

  put("environment.source", e.environment_source == EnvironmentSource::Grid ? "grid" : "generate");
  put("environment.count", std::to_string(e.n_environments));
  put("environment.obstacles", std::to_string(e.n_obstacles));
  put("environment.size_min", d(e.obstacle_sizes.min));
  put("environment.size_max", d(e.obstacle_sizes.max));
  put("environment.min_x", d(e.bounds.min.x()));
  put("environment.min_y", d(e.bounds.min.y()));
  put("environment.max_x", d(e.bounds.max.x()));
  put("environment.max_y", d(e.bounds.max.y()));
  put("environment.grid_file", e.grid_file);
  put("environment.grid_resolution", d(e.grid_resolution));

  put("robot.plant", to_string(r.kind));
  if (!r.footprint.is_circle()) throw ConfigError("robot footprint must be a disc to be written to a config file");
  put("robot.footprint_radius", d(r.footprint.as_circle().radius));
  put("robot.gp_input", r.gp_input == GpInput::Position ? "position" : "position_heading");
  put("robot.eta", d(r.eta));
  put("robot.reference_spacing", d(r.reference_spacing));
  put("robot.lqr_q", d(r.lqr_q));
  put("robot.lqr_r", d(r.lqr_r));
  put("robot.linear_process_noise", d(detail::isotropic(r.linear.M, "robot.linear_process_noise")));
  put("robot.linear_sensor_noise", d(detail::isotropic(r.linear.N, "robot.linear_sensor_noise")));
  put("robot.linear_u_max", d(r.linear.u_max));
  put("robot.dubins_speed", d(r.dubins.v));
  put("robot.dubins_tau", d(r.dubins.tau));
  put("robot.dubins_rho", d(r.dubins.rho));
  put("robot.dubins_sigma_v", d(r.dubins.sigma_v));
  put("robot.dubins_sigma_w", d(r.dubins.sigma_w));
  put("robot.dubins_sigma_rot", d(r.dubins.sigma_rot));
  put("robot.dubins_sensor_noise", d(detail::isotropic(r.dubins.N, "robot.dubins_sensor_noise")));

  put("gp.training_samples", std::to_string(e.n_training));
  put("gp.length_scales", join<double>(e.length_scales, shortest));
  put("gp.noise_variance", d(e.noise_variance));
  put("gp.pairing", to_string(e.collect.pairing));
  put("gp.max_walk_steps", std::to_string(e.collect.max_walk_steps));
  put("gp.record_every", std::to_string(e.collect.record_every));

  put("planner.planners", join<PlannerKind>(e.planners, [](const PlannerKind& k) { return std::string(to_string(k)); }));
  put("planner.deltas", join<double>(e.deltas, shortest));
  put("planner.iterations", std::to_string(e.iterations));
  put("planner.max_seconds", d(e.max_seconds));
  put("planner.goal_radius", d(e.goal_radius));
  put("planner.goal_heading_tolerance", d(e.goal_heading_tolerance));

  put("experiment.pairs_per_environment", std::to_string(e.pairs_per_environment));
  put("experiment.trials", std::to_string(e.n_trials));
  put("experiment.pair_clearance", d(e.pair_clearance));
  put("experiment.pair_separation", d(e.pair_separation));

  put("density.obstacle_counts", join<int>(rc.density.obstacle_counts, [](const int& v) { return std::to_string(v); }));
  put("density.delta", d(rc.density.delta));
  put("density.start_x", d(rc.density.start_mean.x()));
  put("density.start_y", d(rc.density.start_mean.y()));
  put("density.goal_x", d(rc.density.goal_mean.x()));
  put("density.goal_y", d(rc.density.goal_mean.y()));
  put("density.planner", to_string(rc.density.planner));
  put("density.segments", std::to_string(rc.density.segments));
  put("density.pairs", std::to_string(rc.density.pairs));
  return t;
}

inline std::string config_to_ini(const RunConfig& rc) {
  std::ostringstream os;
  boost::property_tree::write_ini(os, config_to_ptree(rc));
  return os.str();
}

/**
 * Reads an INI file over the defaults. Unknown keys are errors so typos do
 * not silently fall back to a default. `robot.plant = dubins` switches the
 * baseline to the unicycle preset before other keys apply.
 */
inline RunConfig config_from_ini(std::istream& in) {
  boost::property_tree::ptree t;
  try {
    boost::property_tree::read_ini(in, t);
  } catch (const boost::property_tree::ini_parser_error& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  RunConfig rc;
  if (const auto plant = t.get_optional<std::string>("robot.plant"); plant && *plant == "dubins")
    rc.experiment = ExperimentConfig::dubins_preset();
  const boost::property_tree::ptree defaults = config_to_ptree(rc);
  for (const auto& [section, body] : t) {
    if (body.empty() || !defaults.get_child_optional(section)) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, value] : body) {
      (void)value;
      if (!defaults.get_child(section).get_child_optional(key))
        throw ConfigError("config: unknown key " + section + "." + key);
    }
  }
  auto str = [&](const std::string& k) { return t.get<std::string>(k, defaults.get<std::string>(k)); };
  auto dbl = [&](const std::string& k) { return parse_double(str(k)); };
  auto integer = [&](const std::string& k) {
    const std::string s = trim(str(k));
    long long v = 0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError(k + ": not an integer: '" + s + "'");
    return v;
  };
  auto& e = rc.experiment;
  auto& r = e.robot;
  try {
    rc.out_dir = str("run.out");
    e.seed = static_cast<std::uint64_t>(integer("run.seed"));
    e.jobs = static_cast<int>(integer("run.jobs"));

    const std::string source = str("environment.source");
    if (source == "grid")
      e.environment_source = EnvironmentSource::Grid;
    else if (source == "generate")
      e.environment_source = EnvironmentSource::Generate;
    else
      throw ConfigError("environment.source must be generate or grid");
    e.n_environments = static_cast<int>(integer("environment.count"));
    e.n_obstacles = static_cast<int>(integer("environment.obstacles"));
    e.obstacle_sizes = {dbl("environment.size_min"), dbl("environment.size_max")};
    e.bounds = {{dbl("environment.min_x"), dbl("environment.min_y")}, {dbl("environment.max_x"), dbl("environment.max_y")}};
    e.grid_file = str("environment.grid_file");
    e.grid_resolution = dbl("environment.grid_resolution");

    r.kind = plant_kind_from_string(str("robot.plant"));
    r.footprint = ConvexShape::circle({0.0, 0.0}, dbl("robot.footprint_radius"));
    const std::string input = str("robot.gp_input");
    if (input == "position")
      r.gp_input = GpInput::Position;
    else if (input == "position_heading")
      r.gp_input = GpInput::PositionHeading;
    else
      throw ConfigError("robot.gp_input must be position or position_heading");
    r.eta = dbl("robot.eta");
    r.reference_spacing = dbl("robot.reference_spacing");
    r.lqr_q = dbl("robot.lqr_q");
    r.lqr_r = dbl("robot.lqr_r");
    r.linear.M = dbl("robot.linear_process_noise") * Eigen::Matrix2d::Identity();
    r.linear.N = dbl("robot.linear_sensor_noise") * Eigen::Matrix2d::Identity();
    r.linear.u_max = dbl("robot.linear_u_max");
    r.dubins.v = dbl("robot.dubins_speed");
    r.dubins.tau = dbl("robot.dubins_tau");
    r.dubins.rho = dbl("robot.dubins_rho");
    r.dubins.sigma_v = dbl("robot.dubins_sigma_v");
    r.dubins.sigma_w = dbl("robot.dubins_sigma_w");
    r.dubins.sigma_rot = dbl("robot.dubins_sigma_rot");
    r.dubins.N = dbl("robot.dubins_sensor_noise") * Eigen::Matrix3d::Identity();

    e.n_training = static_cast<int>(integer("gp.training_samples"));
    e.length_scales.clear();
    for (const auto& s : split_list(str("gp.length_scales"))) e.length_scales.push_back(parse_double(s));
    e.noise_variance = dbl("gp.noise_variance");
    e.collect.pairing = pairing_from_string(str("gp.pairing"));
    e.collect.max_walk_steps = static_cast<int>(integer("gp.max_walk_steps"));
    e.collect.record_every = static_cast<int>(integer("gp.record_every"));

    e.planners.clear();
    for (const auto& s : split_list(str("planner.planners"))) e.planners.push_back(planner_from_string(s));
    e.deltas.clear();
    for (const auto& s : split_list(str("planner.deltas"))) e.deltas.push_back(parse_double(s));
    e.iterations = static_cast<int>(integer("planner.iterations"));
    e.max_seconds = dbl("planner.max_seconds");
    e.goal_radius = dbl("planner.goal_radius");
    e.goal_heading_tolerance = dbl("planner.goal_heading_tolerance");

    e.pairs_per_environment = static_cast<int>(integer("experiment.pairs_per_environment"));
    e.n_trials = static_cast<int>(integer("experiment.trials"));
    e.pair_clearance = dbl("experiment.pair_clearance");
    e.pair_separation = dbl("experiment.pair_separation");

    rc.density.obstacle_counts.clear();
    for (const auto& s : split_list(str("density.obstacle_counts"))) rc.density.obstacle_counts.push_back(std::stoi(s));
    rc.density.delta = dbl("density.delta");
    rc.density.start_mean = {dbl("density.start_x"), dbl("density.start_y")};
    rc.density.goal_mean = {dbl("density.goal_x"), dbl("density.goal_y")};
    rc.density.planner = planner_from_string(str("density.planner"));
    rc.density.segments = static_cast<int>(integer("density.segments"));
    rc.density.pairs = static_cast<int>(integer("density.pairs"));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& err) {
    throw ConfigError(std::string("config: ") + err.what());
  }
  return rc;
}

inline RunConfig config_from_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  return config_from_ini(f);
}

}  // namespace ccgp
