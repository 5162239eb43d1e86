#pragma once

#include "ccgp/gp.hpp"
#include "ccgp/segment.hpp"
#include "ccgp/shgo.hpp"

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace ccgp {

/**
 * erf(x) = 2/sqrt(pi) exp(-x^2) sum_n 2^n x^(2n+1) / (1*3*...*(2n+1)).
 * Every term is positive, so the sum has no cancellation; beyond |x| = 6
 * erf is 1 to double precision.
 */
inline double erf(double x) {
  if (std::isnan(x)) return x;
  const double ax = std::abs(x);
  if (ax >= 6.0) return std::copysign(1.0, x);
  const double x2 = ax * ax;
  double term = ax, sum = ax;
  for (int n = 1; n < 500; ++n) {
    term *= 2.0 * x2 / (2.0 * n + 1.0);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  const double v = std::min(1.0, 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x2) * sum);
  return std::copysign(v, x);
}

/// Inverse of erf on (-1, 1): safeguarded Newton inside a shrinking bisection bracket.
inline double erfinv(double y) {
  if (!(y > -1.0 && y < 1.0)) {
    if (y == 1.0) return std::numeric_limits<double>::infinity();
    if (y == -1.0) return -std::numeric_limits<double>::infinity();
    throw std::domain_error("erfinv argument outside [-1, 1]");
  }
  if (y == 0.0) return 0.0;
  const double target = std::abs(y);
  double lo = 0.0, hi = 6.0;
  double x = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double f = erf(x) - target;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    const double slope = 2.0 / std::sqrt(std::numbers::pi) * std::exp(-x * x);
    double next = x - f / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - x) <= 1e-12 * std::max(1.0, x) || hi - lo <= 1e-15) {
      x = next;
      break;
    }
    x = next;
  }
  return std::copysign(x, y);
}

/// P(d < 0) <= delta becomes g >= c with c = erfinv(1 - 2 delta).
struct ChanceConstraint {
  double delta{0.05};
  double c{0.0};

  explicit ChanceConstraint(double d) : delta(d), c(threshold_from_delta(d)) {}

  static double threshold_from_delta(double delta) {
    if (!(delta > 0.0) || delta > 0.5)
      throw std::domain_error("chance bound must lie in (0, 0.5]");
    return erfinv(1.0 - 2.0 * delta);
  }
};

inline double threshold_from_delta(double delta) { return ChanceConstraint::threshold_from_delta(delta); }

/// Which part of a pose feeds the GP.
enum class GpInput { Position, PositionHeading };

inline Eigen::VectorXd project(const Pose2& q, GpInput in) {
  Eigen::VectorXd v(in == GpInput::Position ? 2 : 3);
  v(0) = q.x;
  v(1) = q.y;
  if (in == GpInput::PositionHeading) v(2) = q.theta;
  return v;
}

inline bool point_satisfies(const GpDistanceModel& m, const Pose2& q, const ChanceConstraint& cc,
                            GpInput in = GpInput::Position) {
  return m.g(project(q, in)) >= cc.c;
}

struct ConnectOptions {
  GpInput input{GpInput::Position};
  /// Composed Lipschitz bound of g; sizes the sample count when valid.
  std::optional<LipschitzBound> lipschitz;
  int default_samples{64};
  int min_samples{32};
  int max_samples{512};
  double resolution{1e-2};
  int budget{200};
  /// Refinement tolerance in t; g moves by about g'' tol^2 / 2 within it.
  double local_tol{1e-6};
  /// Absolute error allowed on the posterior mean and variance per query.
  double view_tolerance{1e-9};
  /// Stop at the first sample below c. The reported minimum is then only an
  /// upper bound on the infimum, which is enough to reject.
  bool early_reject{true};
};

struct ConnectReport {
  bool accepted{false};
  double c_hat{std::numeric_limits<double>::quiet_NaN()};
  double t_star{0.0};
  int evaluations{0};
  bool lipschitz_used{false};
  bool converged{true};
  bool early_exit{false};
  int samples{0};
};

inline int connect_samples(const ConnectOptions& opt, double length) {
  if (opt.lipschitz && opt.lipschitz->valid && std::isfinite(opt.lipschitz->composed())) {
    const double want = std::ceil(opt.lipschitz->composed() * length / opt.resolution);
    return static_cast<int>(std::clamp(want, double(opt.min_samples), double(opt.max_samples)));
  }
  return opt.default_samples;
}

/**
 * @brief Certify a whole segment: the minimum of g along it must reach c.
 *
 * The minimum comes from SHGO over t in [0, 1]. A non-converged search is a
 * rejection.
 */
inline ConnectReport connect(const GpDistanceModel& model, const Segment& seg, const ChanceConstraint& cc,
                             const ConnectOptions& opt = {}) {
  ConnectReport r;
  const double len = seg.length();
  if (len <= 0.0) {
    r.c_hat = model.g(project(seg.at(0.0), opt.input));
    r.t_star = 0.0;
    r.evaluations = 1;
    r.accepted = r.c_hat >= cc.c;
    return r;
  }
  const int n = connect_samples(opt, len);
  r.samples = n;
  r.lipschitz_used = opt.lipschitz && opt.lipschitz->valid;

  // Every point of the curve lies within len/2 of its arc-length midpoint;
  // with heading in the input the turn rate stretches that by sqrt(1 + k^2).
  double radius = 0.5 * len;
  if (opt.input == GpInput::PositionHeading) {
    if (const auto* dp = std::get_if<DubinsPath>(&seg.curve)) radius *= std::sqrt(1.0 + 1.0 / (dp->rho * dp->rho));
  }
  const auto view = model.local_view(project(seg.at(0.5), opt.input), radius, opt.view_tolerance);

  std::unordered_map<double, double> memo;
  auto g_at = [&](double t) {
    const auto it = memo.find(t);
    if (it != memo.end()) return it->second;
    const double v = view.g(project(seg.at(t), opt.input));
    memo.emplace(t, v);
    return v;
  };

  // The SHGO sample grid, evaluated in two batches: a coarse pass that
  // catches most violations, then the rest.
  const int coarse_stride = std::max(1, (n - 1) / 8);
  for (int pass = 0; pass < 2; ++pass) {
    std::vector<double> ts;
    for (int i = 0; i < n; ++i)
      if ((i % coarse_stride == 0 || i == n - 1) == (pass == 0)) ts.push_back(static_cast<double>(i) / (n - 1));
    Eigen::MatrixXd Q(project(seg.at(0.0), opt.input).size(), static_cast<Eigen::Index>(ts.size()));
    for (std::size_t i = 0; i < ts.size(); ++i) Q.col(static_cast<Eigen::Index>(i)) = project(seg.at(ts[i]), opt.input);
    const Eigen::VectorXd v = view.g_batch(Q);
    for (std::size_t i = 0; i < ts.size(); ++i) memo.emplace(ts[i], v(static_cast<Eigen::Index>(i)));
    if (!opt.early_reject) continue;
    const auto worst = std::min_element(ts.begin(), ts.end(), [&](double a, double b) { return memo[a] < memo[b]; });
    if (memo[*worst] < cc.c) {
      r.c_hat = memo[*worst];
      r.t_star = *worst;
      r.evaluations = static_cast<int>(memo.size());
      r.early_exit = true;
      r.accepted = false;
      return r;
    }
  }

  shgo::Objective f{[&](const shgo::Point& p) { return g_at(p(0)); }, false};
  shgo::Options so;
  so.n_samples = n;
  so.budget = opt.budget;
  so.local_tol = opt.local_tol;
  if (r.lipschitz_used) so.lipschitz_hint = opt.lipschitz->composed() * len;
  const auto res = shgo::minimize(f, shgo::Box::unit(1), so);
  r.c_hat = res.value;
  r.t_star = res.argmin(0);
  r.converged = res.converged;
  r.evaluations = static_cast<int>(memo.size());
  r.accepted = r.converged && r.c_hat >= cc.c;
  return r;
}

}  // namespace ccgp
