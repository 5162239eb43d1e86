#pragma once

#include "ccgp/dubins.hpp"
#include "ccgp/geometry.hpp"

#include <cmath>
#include <variant>

namespace ccgp {

struct LineSegment {
  Vec2 a{0.0, 0.0};
  Vec2 b{0.0, 0.0};

  double length() const { return (b - a).norm(); }
};

/**
 * @brief Edge between two planner states, parameterized by t in [0, 1] with
 * constant speed: |ds/dt| = length. `reversed` traverses the same curve from
 * its far end.
 */
struct Segment {
  std::variant<LineSegment, DubinsPath> curve;
  bool reversed{false};

  static Segment line(const Vec2& a, const Vec2& b) { return {LineSegment{a, b}, false}; }
  static Segment dubins(const DubinsPath& p) { return {p, false}; }

  bool is_line() const { return std::holds_alternative<LineSegment>(curve); }

  double length() const {
    return std::visit([](const auto& c) { return c.length(); }, curve);
  }

  Segment reverse() const { return {curve, !reversed}; }

  Pose2 at(double t) const {
    t = std::clamp(t, 0.0, 1.0);
    if (reversed) t = 1.0 - t;
    if (const auto* l = std::get_if<LineSegment>(&curve)) {
      const Vec2 d = l->b - l->a;
      const Vec2 p = l->a + t * d;
      double heading = d.squaredNorm() > 0.0 ? std::atan2(d.y(), d.x()) : 0.0;
      if (reversed) heading = wrap_angle(heading + std::numbers::pi);
      return {p.x(), p.y(), heading};
    }
    const auto& dp = std::get<DubinsPath>(curve);
    Pose2 q = dp.at(t * dp.length());
    if (reversed) q.theta = wrap_angle(q.theta + std::numbers::pi);
    return q;
  }

  Pose2 front() const { return at(0.0); }
  Pose2 back() const { return at(1.0); }
};

}  // namespace ccgp
