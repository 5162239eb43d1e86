#include "ccgp/geometry.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <random>

using namespace ccgp;

namespace {

std::vector<Vec2> sample_boundary(const ConvexShape& s, int n) {
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(n));
  if (s.is_circle()) {
    for (int i = 0; i < n; ++i) {
      const double a = 2.0 * std::numbers::pi * i / n;
      out.push_back(s.as_circle().center + s.as_circle().radius * Vec2(std::cos(a), std::sin(a)));
    }
    return out;
  }
  const auto& v = s.as_polygon().vertices;
  double perimeter = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) perimeter += (v[(i + 1) % v.size()] - v[i]).norm();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const Vec2 a = v[i], b = v[(i + 1) % v.size()];
    const int k = std::max(1, static_cast<int>(n * (b - a).norm() / perimeter));
    for (int j = 0; j < k; ++j) out.push_back(a + (b - a) * (static_cast<double>(j) / k));
  }
  return out;
}

double sampled_distance(const ConvexShape& a, const ConvexShape& b, int n = 10000) {
  const auto pa = sample_boundary(a, n), pb = sample_boundary(b, n);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pa)
    for (const auto& q : pb) best = std::min(best, (p - q).squaredNorm());
  return std::sqrt(best);
}

// Separating-axis overlap test, independent of GJK.
bool brute_overlap(const ConvexShape& a, const ConvexShape& b) {
  auto point_segment = [](const Vec2& p, const Vec2& s0, const Vec2& s1) {
    const Vec2 d = s1 - s0;
    const double t = std::clamp((p - s0).dot(d) / d.squaredNorm(), 0.0, 1.0);
    return (p - (s0 + t * d)).norm();
  };
  auto inside = [](const Vec2& p, const std::vector<Vec2>& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
      if (cross2(v[(i + 1) % v.size()] - v[i], p - v[i]) < 0.0) return false;
    return true;
  };
  if (a.is_circle() && b.is_circle())
    return (a.as_circle().center - b.as_circle().center).norm() <=
           a.as_circle().radius + b.as_circle().radius;
  if (a.is_circle() || b.is_circle()) {
    const auto& c = a.is_circle() ? a.as_circle() : b.as_circle();
    const auto& v = a.is_circle() ? b.as_polygon().vertices : a.as_polygon().vertices;
    if (inside(c.center, v)) return true;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (point_segment(c.center, v[i], v[(i + 1) % v.size()]) <= c.radius) return true;
    return false;
  }
  for (const auto* poly : {&a.as_polygon().vertices, &b.as_polygon().vertices}) {
    for (std::size_t i = 0; i < poly->size(); ++i) {
      const Vec2 e = (*poly)[(i + 1) % poly->size()] - (*poly)[i];
      const Vec2 axis(-e.y(), e.x());
      double amin = 1e300, amax = -1e300, bmin = 1e300, bmax = -1e300;
      for (const auto& p : a.as_polygon().vertices) {
        amin = std::min(amin, p.dot(axis));
        amax = std::max(amax, p.dot(axis));
      }
      for (const auto& p : b.as_polygon().vertices) {
        bmin = std::min(bmin, p.dot(axis));
        bmax = std::max(bmax, p.dot(axis));
      }
      if (amax < bmin || bmax < amin) return false;
    }
  }
  return true;
}

ConvexShape random_shape(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec2 c(4.0 * u(rng), 4.0 * u(rng));
  if (u(rng) < 0.4) return ConvexShape::circle(c, 0.1 + u(rng));
  // Random convex polygon: sorted angles on an ellipse.
  const int k = 3 + static_cast<int>(u(rng) * 5);
  std::vector<double> angles;
  for (int i = 0; i < k; ++i) angles.push_back(2.0 * std::numbers::pi * u(rng));
  std::sort(angles.begin(), angles.end());
  const double rx = 0.2 + u(rng), ry = 0.2 + u(rng);
  std::vector<Vec2> v;
  for (double a : angles) v.push_back(c + Vec2(rx * std::cos(a), ry * std::sin(a)));
  try {
    return ConvexShape::polygon(v);
  } catch (const InvalidShape&) {
    return ConvexShape::box(c, 2 * rx, 2 * ry, u(rng));
  }
}

}  // namespace

TEST(Gjk, AxisAlignedGap) {
  const auto a = ConvexShape::box({0, 0}, 1, 1);
  const auto b = ConvexShape::box({3, 0}, 1, 1);
  EXPECT_NEAR(gjk_distance(a, b), 2.0, 1e-12);
}

TEST(Gjk, OverlappingSquares) {
  EXPECT_EQ(gjk_distance(ConvexShape::box({0, 0}, 1, 1), ConvexShape::box({0.5, 0}, 1, 1)), 0.0);
}

TEST(Gjk, SquareVersusCircleMatchesBoundarySampling) {
  const auto sq = ConvexShape::box({0, 0}, 1, 1);
  const auto c = ConvexShape::circle({3, 3}, 0.5);
  const double oracle = sampled_distance(sq, c);
  EXPECT_NEAR(gjk_distance(sq, c), oracle, 1e-3);
  EXPECT_NEAR(gjk_distance(sq, c), (Vec2(3, 3) - Vec2(0.5, 0.5)).norm() - 0.5, 1e-9);
}

TEST(Gjk, DegeneratePolygonRejected) {
  EXPECT_THROW(ConvexShape::polygon({{0, 0}, {1, 0}, {2, 0}}), InvalidShape);
  EXPECT_THROW(ConvexShape::polygon({{0, 0}, {1, 0}, {2, 0}, {1, 1}}), InvalidShape);
  EXPECT_THROW(ConvexShape::polygon({{0, 0}, {1, 0}}), InvalidShape);
  EXPECT_THROW(ConvexShape::circle({0, 0}, 0.0), InvalidShape);
  // Reflex vertex.
  EXPECT_THROW(ConvexShape::polygon({{0, 0}, {2, 0}, {1, 0.5}, {2, 2}, {0, 2}}), InvalidShape);
}

TEST(Gjk, ClockwiseInputIsNormalized) {
  const auto p = ConvexShape::polygon({{0, 0}, {0, 1}, {1, 1}, {1, 0}});
  EXPECT_NEAR(p.area(), 1.0, 1e-15);
}

TEST(Gjk, FuzzAgainstBruteForce) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  int overlaps = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = random_shape(rng), b = random_shape(rng);
    const double dab = gjk_distance(a, b), dba = gjk_distance(b, a);
    ASSERT_GE(dab, 0.0);
    ASSERT_LE(std::abs(dab - dba), 1e-12);
    const bool overlap = brute_overlap(a, b);
    overlaps += overlap;
    ASSERT_EQ(dab == 0.0, overlap) << "pair " << i << " distance " << dab;
    const Pose2 shift{u(rng), u(rng), 0.0};
    ASSERT_LE(std::abs(gjk_distance(a.transformed(shift), b.transformed(shift)) - dab), 1e-9);
  }
  EXPECT_GT(overlaps, 50);
  EXPECT_LT(overlaps, 950);
}

TEST(Gjk, PolygonDistanceMatchesSampling) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 20; ++i) {
    const auto a = random_shape(rng), b = random_shape(rng);
    const double d = gjk_distance(a, b);
    if (d == 0.0) continue;
    EXPECT_NEAR(d, sampled_distance(a, b, 3000), 5e-3);
  }
}

TEST(Footprint, PosingPreservesArea) {
  const auto body = ConvexShape::polygon({{-0.3, -0.2}, {0.4, -0.2}, {0.5, 0.1}, {-0.3, 0.2}});
  const RobotFootprint r{body, {2.0, -1.0, 0.7}};
  EXPECT_NEAR(r.placed().area(), body.area(), 1e-12);
}

TEST(DistanceToCollision, OverlapIsZero) {
  Environment env;
  env.bounds = {{0, 0}, {10, 10}};
  env.obstacles = {ConvexShape::box({2, 2}, 1, 1), ConvexShape::circle({5, 5}, 1),
                   ConvexShape::box({8, 2}, 1, 2)};
  const RobotFootprint robot{ConvexShape::circle({0, 0}, 0.3), {5.5, 5.0, 0.0}};
  EXPECT_EQ(distance_to_collision(env, robot), 0.0);
}

TEST(DistanceToCollision, SingleObstacleReduces) {
  Environment env;
  env.obstacles = {ConvexShape::circle({5, 5}, 1)};
  const RobotFootprint robot{ConvexShape::box({0, 0}, 0.4, 0.4), {1.0, 2.0, 0.3}};
  EXPECT_EQ(distance_to_collision(env, robot), gjk_distance(robot.placed(), env.obstacles[0]));
}

TEST(DistanceToCollision, EmptyEnvironmentThrows) {
  Environment env;
  EXPECT_THROW(distance_to_collision(env, ConvexShape::circle({0, 0}, 1)), NoObstacles);
}

TEST(DistanceToCollision, RandomEnvironmentMatchesPerObstacleOracle) {
  const auto env = generate_environment(42, 5, {{0, 0}, {10, 10}}, {0.5, 2.0});
  const RobotFootprint robot{ConvexShape::circle({0, 0}, 0.2), {0.5, 9.5, 0.0}};
  double oracle = std::numeric_limits<double>::infinity();
  for (const auto& o : env.obstacles)
    oracle = std::min(oracle, brute_overlap(robot.placed(), o) ? 0.0 : sampled_distance(robot.placed(), o, 4000));
  EXPECT_NEAR(distance_to_collision(env, robot), oracle, 2e-3);
}

TEST(DistanceToCollision, OneLipschitzInTranslation) {
  const auto env = generate_environment(3, 12, {{0, 0}, {10, 10}}, {0.5, 2.0});
  const auto body = ConvexShape::box({0, 0}, 0.5, 0.3);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 10.0), du(-0.5, 0.5);
  for (int i = 0; i < 2000; ++i) {
    const Pose2 p{u(rng), u(rng), u(rng)};
    const Vec2 delta(du(rng), du(rng));
    const Pose2 q{p.x + delta.x(), p.y + delta.y(), p.theta};
    const double a = distance_to_collision(env, RobotFootprint{body, p});
    const double b = distance_to_collision(env, RobotFootprint{body, q});
    ASSERT_LE(std::abs(a - b), delta.norm() + 1e-9);
  }
}

TEST(GenerateEnvironment, DeterministicAndInBounds) {
  const Bounds2 bounds{{0, 0}, {20, 10}};
  const auto a = generate_environment(9, 30, bounds, {0.5, 3.0});
  const auto b = generate_environment(9, 30, bounds, {0.5, 3.0});
  ASSERT_EQ(a.obstacles.size(), 30u);
  for (std::size_t i = 0; i < a.obstacles.size(); ++i) {
    const auto [lo, hi] = a.obstacles[i].aabb();
    EXPECT_TRUE(bounds.contains(lo, 1e-12) && bounds.contains(hi, 1e-12));
    EXPECT_EQ(a.obstacles[i].aabb().first, b.obstacles[i].aabb().first);
    EXPECT_GT(a.obstacles[i].area(), 0.0);
  }
  const auto c = generate_environment(10, 30, bounds, {0.5, 3.0});
  EXPECT_NE(a.obstacles[0].aabb().first, c.obstacles[0].aabb().first);
  EXPECT_TRUE(generate_environment(1, 0, bounds, {0.5, 1.0}).obstacles.empty());
}

TEST(GenerateEnvironment, ParameterErrors) {
  const Bounds2 bounds{{0, 0}, {4, 4}};
  EXPECT_THROW(generate_environment(1, 3, bounds, {1.0, 5.0}), std::invalid_argument);
  EXPECT_THROW(generate_environment(1, -1, bounds, {1.0, 2.0}), std::invalid_argument);
  EXPECT_THROW(generate_environment(1, 3, bounds, {2.0, 1.0}), std::invalid_argument);
}

TEST(OccupancyGrid, AsciiMergesRectangles) {
  const std::string text =
      "4 3\n"
      "1100\n"
      "1101\n"
      "0001\n";
  const auto env = grid_to_environment(parse_occupancy_grid(text), 0.5);
  EXPECT_DOUBLE_EQ(env.bounds.max.x(), 2.0);
  EXPECT_DOUBLE_EQ(env.bounds.max.y(), 1.5);
  ASSERT_EQ(env.obstacles.size(), 2u);
  double total = 0.0;
  for (const auto& o : env.obstacles) total += o.area();
  EXPECT_NEAR(total, 6 * 0.25, 1e-12);
  // Top-left 2x2 block becomes one rectangle spanning y in [0.5, 1.5].
  const auto [lo, hi] = env.obstacles[0].aabb();
  EXPECT_NEAR(lo.x(), 0.0, 1e-12);
  EXPECT_NEAR(lo.y(), 0.5, 1e-12);
  EXPECT_NEAR(hi.x(), 1.0, 1e-12);
  EXPECT_NEAR(hi.y(), 1.5, 1e-12);

  const auto unmerged = grid_to_environment(parse_occupancy_grid(text), 0.5, false);
  EXPECT_EQ(unmerged.obstacles.size(), 6u);
}

TEST(OccupancyGrid, PgmPlainAndBinaryAgree) {
  // Dark pixels (value 0) are occupied.
  const std::string p2 = "P2\n# comment\n3 2\n255\n0 255 255\n255 255 0\n";
  std::string p5 = "P5\n3 2\n255\n";
  for (unsigned char c : {0, 255, 255, 255, 255, 0}) p5.push_back(static_cast<char>(c));
  const auto a = parse_occupancy_grid(p2), b = parse_occupancy_grid(p5);
  EXPECT_EQ(a.occupancy, b.occupancy);
  EXPECT_TRUE(a.occupied(0, 0));
  EXPECT_FALSE(a.occupied(0, 1));
  EXPECT_TRUE(a.occupied(1, 2));
  EXPECT_EQ(grid_to_environment(a, 1.0).obstacles.size(), 2u);
}

TEST(OccupancyGrid, ImportFromFile) {
  const std::string path = ::testing::TempDir() + "grid.txt";
  {
    std::ofstream f(path);
    f << "3 3\n010\n010\n000\n";
  }
  const auto env = import_occupancy_grid(path, 2.0);
  ASSERT_EQ(env.obstacles.size(), 1u);
  EXPECT_NEAR(env.obstacles[0].area(), 8.0, 1e-12);
  EXPECT_THROW(import_occupancy_grid(path, 0.0), std::invalid_argument);
  std::remove(path.c_str());
}

TEST(OccupancyGrid, ParseErrorsCarryLocation) {
  try {
    parse_occupancy_grid("3 2\n010\n0x0\n");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_EQ(e.byte_offset(), 9u);
  }
  EXPECT_THROW(parse_occupancy_grid("3 2\n010\n01"), ParseError);
  EXPECT_THROW(parse_occupancy_grid("2 1\n0101\n"), ParseError);
  EXPECT_THROW(parse_occupancy_grid("P5\n2 2\n255\nab"), ParseError);
  EXPECT_THROW(parse_occupancy_grid("P2\n2 1\n10\n5 11\n"), ParseError);
}
