#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <variant>
#include <vector>

namespace ccgp {

using Vec2 = Eigen::Vector2d;

class InvalidShape : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

class ParseError : public std::runtime_error {
public:
  ParseError(const std::string& what, std::size_t line, std::size_t byte_offset)
      : std::runtime_error(what + " (line " + std::to_string(line) + ", byte " +
                           std::to_string(byte_offset) + ")"),
        line_(line),
        byte_offset_(byte_offset) {}

  std::size_t line() const noexcept { return line_; }
  std::size_t byte_offset() const noexcept { return byte_offset_; }

private:
  std::size_t line_;
  std::size_t byte_offset_;
};

/// Planar rigid transform (x, y, heading).
struct Pose2 {
  double x{0.0};
  double y{0.0};
  double theta{0.0};

  Vec2 position() const { return {x, y}; }

  Vec2 apply(const Vec2& p) const {
    const double c = std::cos(theta), s = std::sin(theta);
    return {x + c * p.x() - s * p.y(), y + s * p.x() + c * p.y()};
  }
};

inline double wrap_angle(double a) {
  a = std::remainder(a, 2.0 * std::numbers::pi);
  // remainder maps to [-pi, pi]; fold -pi onto pi so the range is (-pi, pi].
  if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
  return a;
}

inline double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

struct Polygon {
  std::vector<Vec2> vertices;  // counter-clockwise, strictly convex
};

struct Circle {
  Vec2 center{0.0, 0.0};
  double radius{0.0};
};

/**
 * @brief Convex obstacle or footprint: a strictly convex polygon or a disc.
 *
 * Construction validates and normalizes: clockwise polygons are reversed,
 * collinear or reflex vertices are rejected.
 */
class ConvexShape {
public:
  static ConvexShape polygon(std::vector<Vec2> vertices) {
    if (vertices.size() < 3) throw InvalidShape("polygon needs at least 3 vertices");
    for (const auto& v : vertices)
      if (!v.allFinite()) throw InvalidShape("polygon vertex is not finite");
    double area2 = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i)
      area2 += cross2(vertices[i], vertices[(i + 1) % vertices.size()]);
    if (area2 < 0.0) std::reverse(vertices.begin(), vertices.end());
    const std::size_t n = vertices.size();
    double scale = 0.0;
    for (const auto& v : vertices) scale = std::max(scale, v.cwiseAbs().maxCoeff());
    const double eps = 1e-12 * std::max(1.0, scale * scale);
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2& a = vertices[i];
      const Vec2& b = vertices[(i + 1) % n];
      const Vec2& c = vertices[(i + 2) % n];
      if (cross2(b - a, c - b) <= eps)
        throw InvalidShape("polygon is degenerate or not strictly convex at vertex " +
                           std::to_string((i + 1) % n));
    }
    // A star-shaped self-intersecting polygon passes the turn test; winding
    // more than once shows up as a total turn of 4*pi or more.
    double turn = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Vec2 e0 = vertices[(i + 1) % n] - vertices[i];
      const Vec2 e1 = vertices[(i + 2) % n] - vertices[(i + 1) % n];
      turn += std::atan2(cross2(e0, e1), e0.dot(e1));
    }
    if (turn > 2.0 * std::numbers::pi + 1e-6) throw InvalidShape("polygon winds more than once");
    ConvexShape s;
    s.shape_ = Polygon{std::move(vertices)};
    return s;
  }

  static ConvexShape circle(const Vec2& center, double radius) {
    if (!(radius > 0.0) || !std::isfinite(radius)) throw InvalidShape("circle radius must be > 0");
    if (!center.allFinite()) throw InvalidShape("circle center is not finite");
    ConvexShape s;
    s.shape_ = Circle{center, radius};
    return s;
  }

  static ConvexShape box(const Vec2& center, double width, double height, double theta = 0.0) {
    const double hw = 0.5 * width, hh = 0.5 * height;
    const Pose2 pose{center.x(), center.y(), theta};
    return polygon({pose.apply({-hw, -hh}), pose.apply({hw, -hh}), pose.apply({hw, hh}),
                    pose.apply({-hw, hh})});
  }

  bool is_circle() const { return std::holds_alternative<Circle>(shape_); }
  const Circle& as_circle() const { return std::get<Circle>(shape_); }
  const Polygon& as_polygon() const { return std::get<Polygon>(shape_); }

  /// Rigid transform of the shape (body frame -> world frame).
  ConvexShape transformed(const Pose2& pose) const {
    ConvexShape s;
    if (is_circle()) {
      s.shape_ = Circle{pose.apply(as_circle().center), as_circle().radius};
    } else {
      Polygon p;
      p.vertices.reserve(as_polygon().vertices.size());
      for (const auto& v : as_polygon().vertices) p.vertices.push_back(pose.apply(v));
      s.shape_ = std::move(p);
    }
    return s;
  }

  double area() const {
    if (is_circle()) return std::numbers::pi * as_circle().radius * as_circle().radius;
    const auto& v = as_polygon().vertices;
    double a = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) a += cross2(v[i], v[(i + 1) % v.size()]);
    return 0.5 * a;
  }

  /// Radius-free core: the vertex list, or the single center point of a disc.
  std::pair<const Vec2*, std::size_t> core() const {
    if (is_circle()) return {&as_circle().center, 1};
    return {as_polygon().vertices.data(), as_polygon().vertices.size()};
  }

  double margin() const { return is_circle() ? as_circle().radius : 0.0; }

  /// Axis-aligned bounding box as (min, max).
  std::pair<Vec2, Vec2> aabb() const {
    if (is_circle()) {
      const Vec2 r(as_circle().radius, as_circle().radius);
      return {as_circle().center - r, as_circle().center + r};
    }
    Vec2 lo = as_polygon().vertices.front(), hi = lo;
    for (const auto& v : as_polygon().vertices) {
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    return {lo, hi};
  }

  /// Largest distance from the body origin to any point of the shape.
  double bounding_radius() const {
    if (is_circle()) return as_circle().center.norm() + as_circle().radius;
    double r = 0.0;
    for (const auto& v : as_polygon().vertices) r = std::max(r, v.norm());
    return r;
  }

private:
  ConvexShape() = default;
  std::variant<Polygon, Circle> shape_;
};

namespace detail {

inline Vec2 core_support(const ConvexShape& s, const Vec2& dir) {
  const auto [pts, n] = s.core();
  std::size_t best = 0;
  double best_dot = pts[0].dot(dir);
  for (std::size_t i = 1; i < n; ++i) {
    const double d = pts[i].dot(dir);
    if (d > best_dot) {
      best_dot = d;
      best = i;
    }
  }
  return pts[best];
}

// Closest point to the origin on segment [a, b]; shrinks the simplex to the
// supporting feature.
inline Vec2 closest_on_segment(std::vector<Vec2>& simplex) {
  const Vec2 a = simplex[0], b = simplex[1];
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 <= 0.0) {
    simplex.resize(1);
    return a;
  }
  const double t = -a.dot(ab) / len2;
  if (t <= 0.0) {
    simplex = {a};
    return a;
  }
  if (t >= 1.0) {
    simplex = {b};
    return b;
  }
  return a + t * ab;
}

// Returns false when the origin lies inside the triangle (overlap).
inline bool closest_on_triangle(std::vector<Vec2>& simplex, Vec2& out) {
  const Vec2 a = simplex[0], b = simplex[1], c = simplex[2];
  const double area = cross2(b - a, c - a);
  if (area != 0.0) {
    const double s0 = cross2(b - a, -a) / area;
    const double s1 = cross2(c - b, -b) / area;
    const double s2 = cross2(a - c, -c) / area;
    if (s0 >= 0.0 && s1 >= 0.0 && s2 >= 0.0) return false;
  }
  double best = std::numeric_limits<double>::infinity();
  std::vector<Vec2> best_simplex;
  const std::array<std::array<Vec2, 2>, 3> edges{{{a, b}, {b, c}, {c, a}}};
  for (const auto& e : edges) {
    std::vector<Vec2> sub{e[0], e[1]};
    const Vec2 p = closest_on_segment(sub);
    const double d = p.squaredNorm();
    if (d < best) {
      best = d;
      best_simplex = sub;
      out = p;
    }
  }
  simplex = std::move(best_simplex);
  return true;
}

}  // namespace detail

inline constexpr double kGjkTolerance = 1e-9;
inline constexpr int kGjkMaxIterations = 100;

/**
 * @brief Separation distance between two convex shapes already placed in the
 * world frame; 0 when they touch or overlap.
 *
 * GJK runs on the radius-free cores and the disc radii are subtracted at the
 * end, so circles are handled exactly rather than through a sampled support.
 */
inline double gjk_distance(const ConvexShape& a, const ConvexShape& b) {
  auto support = [&](const Vec2& dir) {
    return Vec2(detail::core_support(a, dir) - detail::core_support(b, -dir));
  };
  const double margin = a.margin() + b.margin();
  std::vector<Vec2> simplex{support(Vec2(1.0, 0.0))};
  Vec2 v = simplex[0];
  for (int iter = 0; iter < kGjkMaxIterations; ++iter) {
    const double vnorm = v.norm();
    if (vnorm <= 1e-14) return 0.0;
    const Vec2 w = support(-v);
    // vnorm - v.w/|v| bounds the gap between |v| and the true distance.
    if (vnorm - v.dot(w) / vnorm <= kGjkTolerance) break;
    bool repeated = false;
    for (const auto& p : simplex)
      if ((p - w).squaredNorm() == 0.0) repeated = true;
    if (repeated) break;
    simplex.push_back(w);
    if (simplex.size() == 2) {
      v = detail::closest_on_segment(simplex);
    } else {
      Vec2 p;
      if (!detail::closest_on_triangle(simplex, p)) return 0.0;
      v = p;
    }
  }
  return std::max(0.0, v.norm() - margin);
}

struct Bounds2 {
  Vec2 min{0.0, 0.0};
  Vec2 max{1.0, 1.0};

  double width() const { return max.x() - min.x(); }
  double height() const { return max.y() - min.y(); }
  double diagonal() const { return (max - min).norm(); }
  double area() const { return width() * height(); }
  bool contains(const Vec2& p, double tol = 0.0) const {
    return p.x() >= min.x() - tol && p.y() >= min.y() - tol && p.x() <= max.x() + tol &&
           p.y() <= max.y() + tol;
  }
};

struct Environment {
  std::vector<ConvexShape> obstacles;
  Bounds2 bounds;
  std::uint64_t seed{0};
};

/// Robot footprint in its body frame together with a world pose.
struct RobotFootprint {
  ConvexShape shape;
  Pose2 pose;

  ConvexShape placed() const { return shape.transformed(pose); }
};

class NoObstacles : public std::invalid_argument {
public:
  NoObstacles() : std::invalid_argument("environment has no obstacles") {}
};

inline double distance_to_collision(const Environment& env, const ConvexShape& placed_robot) {
  if (env.obstacles.empty()) throw NoObstacles();
  double best = std::numeric_limits<double>::infinity();
  for (const auto& obs : env.obstacles) {
    best = std::min(best, gjk_distance(placed_robot, obs));
    if (best <= 0.0) return 0.0;
  }
  return best;
}

inline double distance_to_collision(const Environment& env, const RobotFootprint& robot) {
  return distance_to_collision(env, robot.placed());
}

struct SizeRange {
  double min{0.5};
  double max{1.5};
};

/**
 * @brief Random environment of blocks (rotated rectangles) and circles.
 *
 * Deterministic for a seed. Every obstacle lies inside the bounds; start and
 * goal clearance is left to the caller.
 */
inline Environment generate_environment(std::uint64_t seed, int n_obstacles, const Bounds2& bounds,
                                        SizeRange sizes) {
  if (n_obstacles < 0) throw std::invalid_argument("n_obstacles must be >= 0");
  if (!(sizes.min > 0.0) || sizes.max < sizes.min)
    throw std::invalid_argument("size range must satisfy 0 < min <= max");
  if (!(bounds.width() > 0.0) || !(bounds.height() > 0.0))
    throw std::invalid_argument("bounds must have positive extent");
  // A block of side max rotated by 45 degrees spans max*sqrt(2).
  if (sizes.max * std::sqrt(2.0) > std::min(bounds.width(), bounds.height()))
    throw std::invalid_argument("size range exceeds workspace bounds");

  Environment env;
  env.bounds = bounds;
  env.seed = seed;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  for (int i = 0; i < n_obstacles; ++i) {
    const bool is_circle = unit(rng) < 0.5;
    if (is_circle) {
      const double r = 0.5 * uniform(sizes.min, sizes.max);
      const Vec2 c(uniform(bounds.min.x() + r, bounds.max.x() - r),
                   uniform(bounds.min.y() + r, bounds.max.y() - r));
      env.obstacles.push_back(ConvexShape::circle(c, r));
    } else {
      const double w = uniform(sizes.min, sizes.max);
      const double h = uniform(sizes.min, sizes.max);
      const double theta = uniform(-std::numbers::pi, std::numbers::pi);
      const double hx = 0.5 * (std::abs(std::cos(theta)) * w + std::abs(std::sin(theta)) * h);
      const double hy = 0.5 * (std::abs(std::sin(theta)) * w + std::abs(std::cos(theta)) * h);
      const Vec2 c(uniform(bounds.min.x() + hx, bounds.max.x() - hx),
                   uniform(bounds.min.y() + hy, bounds.max.y() - hy));
      env.obstacles.push_back(ConvexShape::box(c, w, h, theta));
    }
  }
  return env;
}

/// Occupancy grid in row-major order, row 0 at the top (image convention).
struct OccupancyGrid {
  std::size_t width{0};
  std::size_t height{0};
  std::vector<double> occupancy;  // probability in [0, 1]

  bool occupied(std::size_t row, std::size_t col) const {
    return occupancy[row * width + col] > 0.5;
  }
};

namespace detail {

class GridReader {
public:
  explicit GridReader(std::string data) : data_(std::move(data)) {}

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(what, line_, pos_); }

  bool at_end() const { return pos_ >= data_.size(); }
  std::size_t pos() const { return pos_; }
  const std::string& data() const { return data_; }

  void skip_space_and_comments() {
    while (pos_ < data_.size()) {
      const char c = data_[pos_];
      if (c == '#') {
        while (pos_ < data_.size() && data_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (c == '\n') ++line_;
        ++pos_;
      } else {
        break;
      }
    }
  }

  long read_uint(const char* what) {
    skip_space_and_comments();
    if (at_end()) fail(std::string("unexpected end of file reading ") + what);
    if (!std::isdigit(static_cast<unsigned char>(data_[pos_])))
      fail(std::string("expected unsigned integer for ") + what);
    long value = 0;
    while (pos_ < data_.size() && std::isdigit(static_cast<unsigned char>(data_[pos_]))) {
      value = value * 10 + (data_[pos_] - '0');
      if (value > 1'000'000'000L) fail(std::string("value too large for ") + what);
      ++pos_;
    }
    return value;
  }

  std::string read_token() {
    skip_space_and_comments();
    const std::size_t start = pos_;
    while (pos_ < data_.size() && !std::isspace(static_cast<unsigned char>(data_[pos_]))) ++pos_;
    return data_.substr(start, pos_ - start);
  }

  // Consumes exactly one whitespace byte (PGM binary header terminator).
  void skip_single_whitespace() {
    if (at_end() || !std::isspace(static_cast<unsigned char>(data_[pos_])))
      fail("expected whitespace before binary raster");
    if (data_[pos_] == '\n') ++line_;
    ++pos_;
  }

  std::size_t line() const { return line_; }
  void advance(std::size_t n) { pos_ += n; }

private:
  std::string data_;
  std::size_t pos_{0};
  std::size_t line_{1};
};

}  // namespace detail

/**
 * @brief Parse a PGM (P2/P5) or plain 0/1 grid.
 *
 * PGM follows the map-server convention: dark pixels are occupied, so the
 * occupancy of a pixel is (maxval - value) / maxval. The ASCII format is a
 * header line "<width> <height>" followed by `height` rows of `width` cells,
 * each 0 or 1, optionally separated by whitespace.
 */
inline OccupancyGrid parse_occupancy_grid(const std::string& contents) {
  detail::GridReader in(contents);
  OccupancyGrid grid;
  const bool pgm = contents.size() >= 2 && contents[0] == 'P' &&
                   (contents[1] == '2' || contents[1] == '5');
  if (pgm) {
    const bool binary = contents[1] == '5';
    in.advance(2);
    grid.width = static_cast<std::size_t>(in.read_uint("width"));
    grid.height = static_cast<std::size_t>(in.read_uint("height"));
    const long maxval = in.read_uint("maxval");
    if (grid.width == 0 || grid.height == 0) in.fail("grid must be non-empty");
    if (maxval <= 0 || maxval > 65535) in.fail("maxval must be in [1, 65535]");
    grid.occupancy.resize(grid.width * grid.height);
    if (binary) {
      in.skip_single_whitespace();
      const std::size_t bytes_per = maxval > 255 ? 2 : 1;
      const std::size_t need = grid.width * grid.height * bytes_per;
      if (contents.size() - in.pos() < need) in.fail("binary raster is truncated");
      const auto* raw = reinterpret_cast<const unsigned char*>(contents.data() + in.pos());
      for (std::size_t i = 0; i < grid.width * grid.height; ++i) {
        const long v = bytes_per == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
        if (v > maxval) in.fail("pixel value exceeds maxval");
        grid.occupancy[i] = static_cast<double>(maxval - v) / static_cast<double>(maxval);
      }
    } else {
      for (std::size_t i = 0; i < grid.width * grid.height; ++i) {
        const long v = in.read_uint("pixel");
        if (v > maxval) in.fail("pixel value exceeds maxval");
        grid.occupancy[i] = static_cast<double>(maxval - v) / static_cast<double>(maxval);
      }
    }
    return grid;
  }

  grid.width = static_cast<std::size_t>(in.read_uint("width"));
  grid.height = static_cast<std::size_t>(in.read_uint("height"));
  if (grid.width == 0 || grid.height == 0) in.fail("grid must be non-empty");
  grid.occupancy.resize(grid.width * grid.height);
  std::size_t filled = 0;
  while (filled < grid.occupancy.size()) {
    in.skip_space_and_comments();
    if (in.at_end()) in.fail("grid has fewer cells than declared");
    const char c = in.data()[in.pos()];
    if (c != '0' && c != '1') in.fail(std::string("unexpected character '") + c + "' in grid");
    grid.occupancy[filled++] = c == '1' ? 1.0 : 0.0;
    in.advance(1);
  }
  in.skip_space_and_comments();
  if (!in.at_end()) in.fail("grid has more cells than declared");
  return grid;
}

/**
 * @brief Convert occupied cells into axis-aligned box obstacles.
 *
 * With `merge` set, horizontal runs are merged first and identical runs on
 * consecutive rows are then stacked into a single rectangle.
 */
inline Environment grid_to_environment(const OccupancyGrid& grid, double resolution,
                                       bool merge = true) {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be > 0");
  Environment env;
  env.bounds = Bounds2{{0.0, 0.0},
                       {static_cast<double>(grid.width) * resolution,
                        static_cast<double>(grid.height) * resolution}};
  struct Rect {
    std::size_t col0, col1, row0, row1;  // inclusive cell ranges
  };
  std::vector<Rect> done;
  std::vector<Rect> open;
  for (std::size_t row = 0; row < grid.height; ++row) {
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    for (std::size_t col = 0; col < grid.width;) {
      if (!grid.occupied(row, col)) {
        ++col;
        continue;
      }
      std::size_t end = col;
      if (merge)
        while (end + 1 < grid.width && grid.occupied(row, end + 1)) ++end;
      runs.emplace_back(col, end);
      col = end + 1;
    }
    std::vector<Rect> next;
    for (const auto& [c0, c1] : runs) {
      auto it = std::find_if(open.begin(), open.end(), [&](const Rect& r) {
        return merge && r.col0 == c0 && r.col1 == c1 && r.row1 + 1 == row;
      });
      if (it != open.end()) {
        Rect r = *it;
        r.row1 = row;
        open.erase(it);
        next.push_back(r);
      } else {
        next.push_back(Rect{c0, c1, row, row});
      }
    }
    for (const auto& r : open) done.push_back(r);
    open = std::move(next);
  }
  for (const auto& r : open) done.push_back(r);
  std::sort(done.begin(), done.end(), [](const Rect& a, const Rect& b) {
    return std::tie(a.row0, a.col0) < std::tie(b.row0, b.col0);
  });
  const double h = static_cast<double>(grid.height);
  for (const auto& r : done) {
    const double x0 = static_cast<double>(r.col0) * resolution;
    const double x1 = static_cast<double>(r.col1 + 1) * resolution;
    const double y0 = (h - static_cast<double>(r.row1 + 1)) * resolution;
    const double y1 = (h - static_cast<double>(r.row0)) * resolution;
    env.obstacles.push_back(ConvexShape::polygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}}));
  }
  return env;
}

inline Environment import_occupancy_grid(const std::string& path, double resolution,
                                         bool merge = true) {
  if (!(resolution > 0.0)) throw std::invalid_argument("resolution must be > 0");
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open occupancy grid '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return grid_to_environment(parse_occupancy_grid(ss.str()), resolution, merge);
}

}  // namespace ccgp
