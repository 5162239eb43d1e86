#pragma once

#include "ccgp/chance.hpp"
#include "ccgp/geometry.hpp"
#include "ccgp/robots.hpp"
#include "ccgp/segment.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccgp {

enum class SteerMode { Linear, Dubins };

inline const char* to_string(SteerMode m) { return m == SteerMode::Linear ? "linear" : "dubins"; }

struct Steering {
  SteerMode mode{SteerMode::Linear};
  /// Maximum edge length produced by extend.
  double eta{1.0};
  double rho{1.0};

  /// Exact connection between two states (no truncation).
  Segment join(const Pose2& a, const Pose2& b) const {
    if (mode == SteerMode::Linear) return Segment::line({a.x, a.y}, {b.x, b.y});
    return Segment::dubins(dubins_shortest(a, b, rho));
  }

  /// Move from a toward b by at most eta.
  Pose2 extend(const Pose2& a, const Pose2& b) const {
    const Segment s = join(a, b);
    const double len = s.length();
    if (len <= eta) return mode == SteerMode::Linear ? Pose2{b.x, b.y, 0.0} : b;
    Pose2 q = s.at(eta / len);
    if (mode == SteerMode::Linear) q.theta = 0.0;
    return q;
  }
};

/// Outcome of testing one edge.
struct EdgeCheck {
  bool ok{false};
  /// Certified margin: minimum g for chance checks, clearance for geometric ones.
  double c_hat{std::numeric_limits<double>::quiet_NaN()};
};

/**
 * @brief Edge predicate used by the planners. `key` separates cache entries
 * for different thresholds (the chance bound for GP checks).
 */
struct ConnectPredicate {
  std::function<EdgeCheck(const Segment&)> edge;
  std::function<bool(const Pose2&)> point;
  double key{0.0};
};

/// Memo of edge checks keyed by (endpoints, key).
class ConnectCache {
 public:
  using Key = std::array<double, 7>;

  const EdgeCheck* find(const Pose2& a, const Pose2& b, double key) const {
    const auto it = map_.find(make(a, b, key));
    return it == map_.end() ? nullptr : &it->second;
  }
  void store(const Pose2& a, const Pose2& b, double key, EdgeCheck r) { map_[make(a, b, key)] = r; }
  std::size_t size() const { return map_.size(); }

 private:
  static Key make(const Pose2& a, const Pose2& b, double key) { return {a.x, a.y, a.theta, b.x, b.y, b.theta, key}; }
  std::map<Key, EdgeCheck> map_;
};

struct PlanningProblem {
  Pose2 start;
  GoalRegion goal;
  Bounds2 bounds;
  Steering steering;
  ConnectPredicate connect;
  int max_iterations{3000};
  double max_seconds{120.0};
  std::uint64_t seed{1};
  double goal_bias{0.05};
  /// Optional JSON-lines event sink.
  std::ostream* event_log{nullptr};
};

struct Tree {
  std::vector<Pose2> nodes;
  std::vector<int> parent;
  std::vector<Segment> edge;  // edge[i] joins parent[i] to i; edge[0] unused
  std::vector<double> c_hat;
  std::vector<double> cost;
  std::vector<std::vector<int>> children;

  int add(const Pose2& q, int par, const Segment& s, double c) {
    nodes.push_back(q);
    parent.push_back(par);
    edge.push_back(s);
    c_hat.push_back(c);
    cost.push_back(par < 0 ? 0.0 : cost[static_cast<std::size_t>(par)] + s.length());
    children.emplace_back();
    if (par >= 0) children[static_cast<std::size_t>(par)].push_back(static_cast<int>(nodes.size()) - 1);
    return static_cast<int>(nodes.size()) - 1;
  }

  std::size_t size() const { return nodes.size(); }

  /// Re-hang node i below p and push the cost change through its subtree.
  void rewire(int i, int p, const Segment& s, double c) {
    const auto ui = static_cast<std::size_t>(i);
    auto& old = children[static_cast<std::size_t>(parent[ui])];
    old.erase(std::find(old.begin(), old.end(), i));
    parent[ui] = p;
    edge[ui] = s;
    c_hat[ui] = c;
    children[static_cast<std::size_t>(p)].push_back(i);
    std::vector<int> stack{i};
    while (!stack.empty()) {
      const auto k = static_cast<std::size_t>(stack.back());
      stack.pop_back();
      cost[k] = cost[static_cast<std::size_t>(parent[k])] + edge[k].length();
      for (int ch : children[k]) stack.push_back(ch);
    }
  }
};

struct PlanStats {
  int iterations{0};
  int connect_calls{0};
  int cache_hits{0};
  int point_checks{0};
  double wall_seconds{0.0};
  std::size_t tree_size{0};
  double goal_bias{0.05};
  /// Best goal cost after each iteration (infinity before the first solution).
  std::vector<double> best_cost_trace;
};

struct Plan {
  std::vector<Pose2> states;
  std::vector<Segment> segments;
  std::vector<double> c_hat;
  double length{0.0};
};

struct PlanResult {
  bool success{false};
  Plan plan;
  PlanStats stats;
  Tree tree;
  std::string failure;
};

namespace detail {

class PlannerCore {
 public:
  explicit PlannerCore(const PlanningProblem& p) : p_(p), rng_(p.seed), t0_(std::chrono::steady_clock::now()) {
    if (!p.connect.edge) throw std::invalid_argument("planning problem without a connect predicate");
    if (p.goal.radius <= 0.0) throw std::invalid_argument("empty goal region");
    result_.stats.goal_bias = p.goal_bias;
  }

  bool start_ok() {
    if (p_.connect.point && !p_.connect.point(p_.start)) {
      result_.failure = "start violates the connect predicate";
      return false;
    }
    result_.tree.add(p_.start, -1, p_.steering.join(p_.start, p_.start), std::numeric_limits<double>::infinity());
    return true;
  }

  bool out_of_budget(int it) const {
    if (it >= p_.max_iterations) return true;
    const std::chrono::duration<double> el = std::chrono::steady_clock::now() - t0_;
    return el.count() > p_.max_seconds;
  }

  Pose2 sample() {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (u(rng_) < p_.goal_bias) {
      const auto& g = p_.goal.goal;
      return {g(0), g(1), p_.steering.mode == SteerMode::Linear ? 0.0 : g(2)};
    }
    const double x = p_.bounds.min.x() + u(rng_) * p_.bounds.width();
    const double y = p_.bounds.min.y() + u(rng_) * p_.bounds.height();
    const double th = p_.steering.mode == SteerMode::Linear ? 0.0 : wrap_angle(-std::numbers::pi + u(rng_) * 2.0 * std::numbers::pi);
    return {x, y, th};
  }

  static double planar_dist2(const Pose2& a, const Pose2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return dx * dx + dy * dy;
  }

  /// Nearest by steering cost: Euclidean for lines, Dubins length otherwise.
  int nearest(const Pose2& q) const {
    const Tree& t = result_.tree;
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < t.size(); ++i) {
      double d;
      if (p_.steering.mode == SteerMode::Linear) {
        d = planar_dist2(t.nodes[i], q);
      } else {
        // Planar distance is a lower bound on Dubins length; skip hopeless candidates.
        if (std::sqrt(planar_dist2(t.nodes[i], q)) >= bd) continue;
        d = p_.steering.join(t.nodes[i], q).length();
      }
      if (d < bd) {
        bd = d;
        best = static_cast<int>(i);
      }
    }
    return best;
  }

  std::vector<int> near(const Pose2& q, double radius) const {
    std::vector<int> out;
    const Tree& t = result_.tree;
    for (std::size_t i = 0; i < t.size(); ++i)
      if (planar_dist2(t.nodes[i], q) <= radius * radius) out.push_back(static_cast<int>(i));
    return out;
  }

  /// Every candidate edge ends at q, so a failing point check rejects them all.
  bool endpoint_ok(const Pose2& q) {
    if (!p_.connect.point) return true;
    ++result_.stats.point_checks;
    return p_.connect.point(q);
  }

  EdgeCheck check(const Pose2& a, const Pose2& b, const Segment& s) {
    if (const auto* hit = cache_.find(a, b, p_.connect.key)) {
      ++result_.stats.cache_hits;
      return *hit;
    }
    ++result_.stats.connect_calls;
    const EdgeCheck r = p_.connect.edge(s);
    cache_.store(a, b, p_.connect.key, r);
    return r;
  }

  void log(const char* event, int iteration, int node, double cost) const {
    if (!p_.event_log) return;
    *p_.event_log << "{\"event\":\"" << event << "\",\"iteration\":" << iteration << ",\"node\":" << node
                  << ",\"cost\":" << (std::isfinite(cost) ? cost : -1.0) << "}\n";
  }

  PlanResult finish(int goal_node, int iterations) {
    auto& st = result_.stats;
    st.iterations = iterations;
    st.tree_size = result_.tree.size();
    st.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    if (goal_node < 0) {
      if (result_.failure.empty()) result_.failure = "budget exhausted without reaching the goal";
      return std::move(result_);
    }
    std::vector<int> chain;
    for (int k = goal_node; k >= 0; k = result_.tree.parent[static_cast<std::size_t>(k)]) chain.push_back(k);
    std::reverse(chain.begin(), chain.end());
    Plan& plan = result_.plan;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const auto k = static_cast<std::size_t>(chain[i]);
      plan.states.push_back(result_.tree.nodes[k]);
      if (i == 0) continue;
      plan.segments.push_back(result_.tree.edge[k]);
      plan.c_hat.push_back(result_.tree.c_hat[k]);
      plan.length += result_.tree.edge[k].length();
    }
    result_.success = true;
    return std::move(result_);
  }

  const PlanningProblem& p_;
  std::mt19937_64 rng_;
  std::chrono::steady_clock::time_point t0_;
  PlanResult result_;
  ConnectCache cache_;
};

}  // namespace detail

/// Plain RRT: returns at the first node that lands in the goal region.
inline PlanResult rrt(const PlanningProblem& problem) {
  detail::PlannerCore core(problem);
  if (!core.start_ok()) return core.finish(-1, 0);
  if (problem.goal.contains({problem.start.x, problem.start.y, problem.start.theta})) return core.finish(0, 0);
  int it = 0;
  while (!core.out_of_budget(it)) {
    ++it;
    const Pose2 target = core.sample();
    const int n = core.nearest(target);
    const Pose2& from = core.result_.tree.nodes[static_cast<std::size_t>(n)];
    const Pose2 q = problem.steering.extend(from, target);
    const Segment s = problem.steering.join(from, q);
    if (s.length() <= 0.0 || !core.endpoint_ok(q)) {
      core.result_.stats.best_cost_trace.push_back(std::numeric_limits<double>::infinity());
      continue;
    }
    const EdgeCheck r = core.check(from, q, s);
    if (!r.ok) continue;
    const int k = core.result_.tree.add(q, n, s, r.c_hat);
    core.log("add", it, k, core.result_.tree.cost.back());
    if (problem.goal.contains({q.x, q.y, q.theta})) {
      core.result_.stats.best_cost_trace.push_back(core.result_.tree.cost.back());
      return core.finish(k, it);
    }
    core.result_.stats.best_cost_trace.push_back(std::numeric_limits<double>::infinity());
  }
  return core.finish(-1, it);
}

/// gamma(log n / n)^(1/dim), with gamma from the free-space measure, never below eta.
inline double rrt_star_radius(const Bounds2& b, const Steering& s, std::size_t n) {
  const double dim = 2.0;
  const double gamma = 2.0 * std::pow(1.0 + 1.0 / dim, 1.0 / dim) * std::pow(b.area() / std::numbers::pi, 1.0 / dim);
  const double nn = static_cast<double>(std::max<std::size_t>(n, 2));
  return std::max(s.eta, gamma * std::pow(std::log(nn) / nn, 1.0 / dim));
}

/**
 * @brief RRT* with lazy parent choice: near nodes are tried in order of the
 * cost they would give and the first edge that passes wins. Rewiring only
 * tests edges that would lower a cost.
 */
inline PlanResult rrt_star(const PlanningProblem& problem) {
  detail::PlannerCore core(problem);
  if (!core.start_ok()) return core.finish(-1, 0);
  Tree& tree = core.result_.tree;
  auto& trace = core.result_.stats.best_cost_trace;
  std::vector<int> goal_nodes;
  if (problem.goal.contains({problem.start.x, problem.start.y, problem.start.theta})) goal_nodes.push_back(0);

  auto best_goal = [&] {
    int best = -1;
    for (int g : goal_nodes)
      if (best < 0 || tree.cost[static_cast<std::size_t>(g)] < tree.cost[static_cast<std::size_t>(best)]) best = g;
    return best;
  };

  int it = 0;
  while (!core.out_of_budget(it)) {
    ++it;
    const Pose2 target = core.sample();
    const int n = core.nearest(target);
    const Pose2 q = problem.steering.extend(tree.nodes[static_cast<std::size_t>(n)], target);
    if (!core.endpoint_ok(q)) {
      const int bg = best_goal();
      trace.push_back(bg < 0 ? std::numeric_limits<double>::infinity() : tree.cost[static_cast<std::size_t>(bg)]);
      continue;
    }
    const double radius = rrt_star_radius(problem.bounds, problem.steering, tree.size());

    struct Candidate {
      int node;
      Segment seg;
      double cost;
    };
    std::vector<Candidate> cands;
    for (int j : core.near(q, radius)) {
      const Pose2& from = tree.nodes[static_cast<std::size_t>(j)];
      Segment s = problem.steering.join(from, q);
      const double len = s.length();
      if (len <= 0.0) continue;
      cands.push_back({j, std::move(s), tree.cost[static_cast<std::size_t>(j)] + len});
    }
    // The extend edge from the nearest node is always a candidate.
    if (std::none_of(cands.begin(), cands.end(), [&](const Candidate& c) { return c.node == n; })) {
      Segment s = problem.steering.join(tree.nodes[static_cast<std::size_t>(n)], q);
      if (s.length() > 0.0) cands.push_back({n, s, tree.cost[static_cast<std::size_t>(n)] + s.length()});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.cost < b.cost; });

    int k = -1;
    for (const auto& c : cands) {
      const EdgeCheck r = core.check(tree.nodes[static_cast<std::size_t>(c.node)], q, c.seg);
      if (!r.ok) continue;
      k = tree.add(q, c.node, c.seg, r.c_hat);
      core.log("add", it, k, tree.cost.back());
      break;
    }
    if (k >= 0) {
      for (const auto& c : cands) {
        if (c.node == tree.parent[static_cast<std::size_t>(k)]) continue;
        const auto j = static_cast<std::size_t>(c.node);
        const Segment back = problem.steering.join(q, tree.nodes[j]);
        const double via = tree.cost[static_cast<std::size_t>(k)] + back.length();
        if (!(via < tree.cost[j]) || c.node == 0) continue;
        const EdgeCheck r = core.check(q, tree.nodes[j], back);
        if (!r.ok) continue;
        tree.rewire(c.node, k, back, r.c_hat);
        core.log("rewire", it, c.node, tree.cost[j]);
      }
      if (problem.goal.contains({q.x, q.y, q.theta})) goal_nodes.push_back(k);
    }
    const int bg = best_goal();
    trace.push_back(bg < 0 ? std::numeric_limits<double>::infinity() : tree.cost[static_cast<std::size_t>(bg)]);
  }
  return core.finish(best_goal(), it);
}

/**
 * @brief Geometric edge check by conservative advancement: the robot can
 * move by the current clearance before anything can touch it, so stepping t
 * by clearance / (max footprint speed) never skips a contact.
 */
inline ConnectPredicate gjk_connect(const Environment& env, const ConvexShape& robot, double min_clearance = 1e-9) {
  const double reach = robot.bounding_radius();
  auto clearance = [env, robot, reach](const Pose2& q) {
    double d = std::numeric_limits<double>::infinity();
    if (!env.obstacles.empty()) d = distance_to_collision(env, RobotFootprint{robot, q});
    const Bounds2& b = env.bounds;
    const double wall = std::min({q.x - b.min.x(), b.max.x() - q.x, q.y - b.min.y(), b.max.y() - q.y}) - reach;
    return std::min(d, wall);
  };
  ConnectPredicate p;
  p.point = [clearance, min_clearance](const Pose2& q) { return clearance(q) > min_clearance; };
  p.edge = [clearance, min_clearance, reach](const Segment& s) {
    const double len = s.length();
    double speed = len;
    if (const auto* dp = std::get_if<DubinsPath>(&s.curve)) speed = len * (1.0 + reach / dp->rho);
    EdgeCheck r{true, std::numeric_limits<double>::infinity()};
    double t = 0.0;
    while (true) {
      const double d = clearance(s.at(t));
      r.c_hat = std::min(r.c_hat, d);
      if (d <= min_clearance) {
        r.ok = false;
        return r;
      }
      if (t >= 1.0 || speed <= 0.0) return r;
      t = std::min(1.0, t + d / speed);
    }
  };
  return p;
}

/// Chance-constrained edge check against a fitted GP distance model.
inline ConnectPredicate chance_connect(const GpDistanceModel& model, double delta, ConnectOptions opt = {}) {
  if (!(delta > 0.0 && delta < 0.5)) throw std::domain_error("chance bound must lie in (0, 0.5)");
  const ChanceConstraint cc(delta);
  ConnectPredicate p;
  p.key = delta;
  p.point = [&model, cc, opt](const Pose2& q) { return point_satisfies(model, q, cc, opt.input); };
  p.edge = [&model, cc, opt](const Segment& s) {
    const ConnectReport r = connect(model, s, cc, opt);
    return EdgeCheck{r.accepted, r.c_hat};
  };
  return p;
}

/// CCGP planners: RRT (star = false) or RRT* with the chance connect.
inline PlanResult ccgp(PlanningProblem problem, const GpDistanceModel& model, double delta, bool star,
                       ConnectOptions opt = {}) {
  problem.connect = chance_connect(model, delta, opt);
  return star ? rrt_star(problem) : rrt(problem);
}

/// Re-check every edge of a finished plan.
inline bool shortcut_check(const Plan& plan, const ConnectPredicate& connect) {
  for (const auto& s : plan.segments)
    if (!connect.edge(s).ok) return false;
  return true;
}

}  // namespace ccgp
