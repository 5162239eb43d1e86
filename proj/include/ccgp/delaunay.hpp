#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ccgp {

namespace detail {

inline double orient2d(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// > 0 when d is strictly inside the circumcircle of the counter-clockwise triangle abc.
inline double incircle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c,
                       const Eigen::Vector2d& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double alift = adx * adx + ady * ady;
  const double blift = bdx * bdx + bdy * bdy;
  const double clift = cdx * cdx + cdy * cdy;
  return adx * (bdy * clift - blift * cdy) - ady * (bdx * clift - blift * cdx) +
         alift * (bdx * cdy - bdy * cdx);
}

}  // namespace detail

/**
 * @brief Bowyer-Watson Delaunay triangulation of points in the unit square.
 *
 * The four corners of [0,1]^2 must be among the points; the triangulation
 * starts from the square split along its diagonal, so no super-triangle is
 * needed. Predicates are exact when coordinates are dyadic with at most ~9
 * fractional bits (Sobol points up to 512 samples). Duplicate points are left
 * out of the triangulation. Returns counter-clockwise index triples.
 */
inline std::vector<std::array<int, 3>> delaunay_unit_square(const std::vector<Eigen::Vector2d>& pts) {
  auto find = [&](double x, double y) {
    for (std::size_t i = 0; i < pts.size(); ++i)
      if (pts[i].x() == x && pts[i].y() == y) return static_cast<int>(i);
    throw std::invalid_argument("Delaunay input must contain the unit-square corners");
  };
  const int c00 = find(0, 0), c10 = find(1, 0), c11 = find(1, 1), c01 = find(0, 1);
  std::vector<std::array<int, 3>> tris{{c00, c10, c11}, {c00, c11, c01}};
  std::vector<bool> inserted(pts.size(), false);
  for (int c : {c00, c10, c11, c01}) inserted[static_cast<std::size_t>(c)] = true;

  for (std::size_t p = 0; p < pts.size(); ++p) {
    if (inserted[p]) continue;
    const auto& q = pts[p];
    if (q.x() < 0.0 || q.x() > 1.0 || q.y() < 0.0 || q.y() > 1.0)
      throw std::invalid_argument("Delaunay input point outside the unit square");
    bool duplicate = false;
    for (std::size_t j = 0; j < pts.size() && !duplicate; ++j)
      duplicate = inserted[j] && pts[j] == q;
    if (duplicate) continue;

    std::vector<std::array<int, 3>> keep;
    std::map<std::pair<int, int>, int> edge_count;
    std::vector<std::pair<int, int>> edges;
    for (const auto& t : tris) {
      if (detail::incircle(pts[t[0]], pts[t[1]], pts[t[2]], q) > 0.0) {
        for (int e = 0; e < 3; ++e) {
          const int a = t[e], b = t[(e + 1) % 3];
          edges.emplace_back(a, b);
          ++edge_count[{std::min(a, b), std::max(a, b)}];
        }
      } else {
        keep.push_back(t);
      }
    }
    if (edges.empty()) throw std::logic_error("Delaunay insertion found no cavity");
    for (const auto& [a, b] : edges) {
      if (edge_count[{std::min(a, b), std::max(a, b)}] != 1) continue;
      // Hull edges of the cavity that are collinear with p would create a
      // zero-area triangle; the point lies on that edge, so skip it.
      if (detail::orient2d(pts[a], pts[b], q) == 0.0) continue;
      keep.push_back({a, b, static_cast<int>(p)});
    }
    tris = std::move(keep);
    inserted[p] = true;
  }
  return tris;
}

}  // namespace ccgp
