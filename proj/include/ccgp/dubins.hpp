#pragma once

#include "ccgp/geometry.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

namespace ccgp {

enum class DubinsWord { LSL, RSR, LSR, RSL, RLR, LRL };

inline const char* to_string(DubinsWord w) {
  constexpr const char* names[] = {"LSL", "RSR", "LSR", "RSL", "RLR", "LRL"};
  return names[static_cast<int>(w)];
}

inline DubinsWord dubins_word_from_string(const std::string& s) {
  for (int i = 0; i < 6; ++i)
    if (s == to_string(static_cast<DubinsWord>(i))) return static_cast<DubinsWord>(i);
  throw std::invalid_argument("unknown Dubins word '" + s + "'");
}

/// Turn direction of each of the three pieces: +1 left, -1 right, 0 straight.
inline std::array<int, 3> dubins_pieces(DubinsWord w) {
  switch (w) {
    case DubinsWord::LSL: return {1, 0, 1};
    case DubinsWord::RSR: return {-1, 0, -1};
    case DubinsWord::LSR: return {1, 0, -1};
    case DubinsWord::RSL: return {-1, 0, 1};
    case DubinsWord::RLR: return {-1, 1, -1};
    case DubinsWord::LRL: return {1, -1, 1};
  }
  return {0, 0, 0};
}

/**
 * @brief Bounded-curvature path: three pieces of normalized lengths
 * `param` (radians for arcs, multiples of rho for the straight piece).
 */
struct DubinsPath {
  Pose2 start;
  double rho{1.0};
  DubinsWord word{DubinsWord::LSL};
  std::array<double, 3> param{0.0, 0.0, 0.0};

  double length() const { return (param[0] + param[1] + param[2]) * rho; }

  /// Pose after travelling arc length s (clamped to [0, length]).
  Pose2 at(double s) const {
    double rest = std::clamp(s / rho, 0.0, param[0] + param[1] + param[2]);
    const auto kinds = dubins_pieces(word);
    double x = 0.0, y = 0.0, th = start.theta;
    for (int i = 0; i < 3; ++i) {
      const double d = std::min(rest, param[static_cast<std::size_t>(i)]);
      rest -= d;
      piece(kinds[static_cast<std::size_t>(i)], d, x, y, th);
      if (rest <= 0.0) break;
    }
    return {start.x + x * rho, start.y + y * rho, wrap_angle(th)};
  }

  Pose2 end() const { return at(length()); }

  /// Signed curvature at arc length s (piece boundaries take the earlier piece).
  double curvature(double s) const {
    const double u = s / rho;
    const auto kinds = dubins_pieces(word);
    if (u <= param[0]) return kinds[0] / rho;
    if (u <= param[0] + param[1]) return kinds[1] / rho;
    return kinds[2] / rho;
  }

  static void piece(int kind, double d, double& x, double& y, double& th) {
    if (kind == 0) {
      x += d * std::cos(th);
      y += d * std::sin(th);
    } else if (kind > 0) {
      x += std::sin(th + d) - std::sin(th);
      y += -std::cos(th + d) + std::cos(th);
      th += d;
    } else {
      x += -std::sin(th - d) + std::sin(th);
      y += std::cos(th - d) - std::cos(th);
      th -= d;
    }
  }
};

namespace detail {

inline double mod2pi(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  if (a < 0.0) a += two_pi;
  // Values within rounding of a full turn are a zero-length arc.
  if (two_pi - a < 1e-12) a = 0.0;
  return a;
}

// Normalized word solutions in the frame where the goal lies on the +x axis
// at distance d, with start heading a and goal heading b.
inline std::optional<std::array<double, 3>> dubins_word(DubinsWord w, double d, double a, double b) {
  const double sa = std::sin(a), sb = std::sin(b), ca = std::cos(a), cb = std::cos(b);
  const double cab = std::cos(a - b);
  switch (w) {
    case DubinsWord::LSL: {
      const double p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sa - sb);
      if (p2 < 0.0) return std::nullopt;
      const double t1 = std::atan2(cb - ca, d + sa - sb);
      return std::array<double, 3>{mod2pi(t1 - a), std::sqrt(p2), mod2pi(b - t1)};
    }
    case DubinsWord::RSR: {
      const double p2 = 2.0 + d * d - 2.0 * cab + 2.0 * d * (sb - sa);
      if (p2 < 0.0) return std::nullopt;
      const double t1 = std::atan2(ca - cb, d - sa + sb);
      return std::array<double, 3>{mod2pi(a - t1), std::sqrt(p2), mod2pi(t1 - b)};
    }
    case DubinsWord::LSR: {
      const double p2 = -2.0 + d * d + 2.0 * cab + 2.0 * d * (sa + sb);
      if (p2 < 0.0) return std::nullopt;
      const double p = std::sqrt(p2);
      const double t0 = std::atan2(-ca - cb, d + sa + sb) - std::atan2(-2.0, p);
      return std::array<double, 3>{mod2pi(t0 - a), p, mod2pi(t0 - b)};
    }
    case DubinsWord::RSL: {
      const double p2 = d * d - 2.0 + 2.0 * cab - 2.0 * d * (sa + sb);
      if (p2 < 0.0) return std::nullopt;
      const double p = std::sqrt(p2);
      const double t0 = std::atan2(ca + cb, d - sa - sb) - std::atan2(2.0, p);
      return std::array<double, 3>{mod2pi(a - t0), p, mod2pi(b - t0)};
    }
    case DubinsWord::RLR: {
      const double c = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sa - sb)) / 8.0;
      if (std::abs(c) > 1.0) return std::nullopt;
      const double p = mod2pi(2.0 * std::numbers::pi - std::acos(c));
      const double t = mod2pi(a - std::atan2(ca - cb, d - sa + sb) + p / 2.0);
      return std::array<double, 3>{t, p, mod2pi(a - b - t + p)};
    }
    case DubinsWord::LRL: {
      const double c = (6.0 - d * d + 2.0 * cab + 2.0 * d * (sb - sa)) / 8.0;
      if (std::abs(c) > 1.0) return std::nullopt;
      const double p = mod2pi(2.0 * std::numbers::pi - std::acos(c));
      const double t = mod2pi(-a - std::atan2(ca - cb, d + sa - sb) + p / 2.0);
      return std::array<double, 3>{t, p, mod2pi(b - a - t + p)};
    }
  }
  return std::nullopt;
}

}  // namespace detail

/// The given word from q1 to q2, if it exists.
inline std::optional<DubinsPath> dubins_path(const Pose2& q1, const Pose2& q2, double rho, DubinsWord w) {
  if (!(rho > 0.0)) throw std::invalid_argument("turning radius must be > 0");
  const double dx = q2.x - q1.x, dy = q2.y - q1.y;
  const double d = std::hypot(dx, dy) / rho;
  // Coincident positions: measure headings from q1 so equal poses give zero length.
  const double phi = d > 0.0 ? std::atan2(dy, dx) : q1.theta;
  const double a = detail::mod2pi(q1.theta - phi), b = detail::mod2pi(q2.theta - phi);
  const auto sol = detail::dubins_word(w, d, a, b);
  if (!sol) return std::nullopt;
  return DubinsPath{q1, rho, w, *sol};
}

/// Shortest of the six words.
inline DubinsPath dubins_shortest(const Pose2& q1, const Pose2& q2, double rho) {
  std::optional<DubinsPath> best;
  for (int i = 0; i < 6; ++i) {
    const auto p = dubins_path(q1, q2, rho, static_cast<DubinsWord>(i));
    if (p && (!best || p->length() < best->length())) best = p;
  }
  if (!best) throw std::logic_error("no Dubins word found");
  return *best;
}

}  // namespace ccgp
