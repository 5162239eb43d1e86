#pragma once

#include "ccgp/delaunay.hpp"
#include "ccgp/sobol.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

namespace ccgp::shgo {

using Point = Eigen::VectorXd;

struct Box {
  Point lower;
  Point upper;

  Eigen::Index dim() const { return lower.size(); }

  static Box unit(Eigen::Index dim) { return {Point::Zero(dim), Point::Ones(dim)}; }

  Point from_unit(const Point& u) const {
    return lower + (upper - lower).cwiseProduct(u);
  }
  Point clamp(const Point& p) const { return p.cwiseMax(lower).cwiseMin(upper); }
};

/// Objective handle. `thread_safe` allows concurrent evaluation of samples.
struct Objective {
  std::function<double(const Point&)> fn;
  bool thread_safe{false};

  double operator()(const Point& p) const { return fn(p); }
};

class ObjectiveError : public std::runtime_error {
public:
  ObjectiveError(const std::string& what, Point where)
      : std::runtime_error(what), point(std::move(where)) {}
  Point point;
};

struct SimplicialComplex {
  std::vector<Point> vertices;  // domain coordinates
  std::vector<double> values;
  /// Directed edges (from, to) with values[from] <= values[to]; ties point to the larger index.
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> simplices;
  std::vector<std::vector<int>> neighbors;
  Box domain;
  /// Upper bound on the distance from any domain point to its nearest vertex.
  double covering_radius{0.0};
};

struct Minimizer {
  int vertex{-1};
  Box star;  // bounding box of the simplices incident to the vertex
};

using MinimizerSet = std::vector<Minimizer>;

struct ShgoResult {
  Point argmin;
  double value{std::numeric_limits<double>::infinity()};
  int evaluations{0};
  int minimizers{0};
  bool converged{true};
  /// L * h when a Lipschitz hint was supplied, else NaN.
  double error_bound{std::numeric_limits<double>::quiet_NaN()};
  /// Local minima found by refinement, one per star.
  std::vector<std::pair<Point, double>> local_minima;
};

struct Options {
  int n_samples{64};
  double local_tol{1e-8};
  int budget{200};  // evaluations per star
  double lipschitz_hint{std::numeric_limits<double>::quiet_NaN()};
  unsigned jobs{1};
};

namespace detail {

inline double evaluate(const Objective& f, const Point& p) {
  const double v = f(p);
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "objective returned non-finite value " << v << " at (" << p.transpose() << ")";
    throw ObjectiveError(os.str(), p);
  }
  return v;
}

inline std::vector<double> evaluate_all(const Objective& f, const std::vector<Point>& pts,
                                        unsigned jobs) {
  std::vector<double> out(pts.size());
  if (!f.thread_safe || jobs <= 1 || pts.size() < 2) {
    for (std::size_t i = 0; i < pts.size(); ++i) out[i] = evaluate(f, pts[i]);
    return out;
  }
  const unsigned workers = std::min<unsigned>(jobs, static_cast<unsigned>(pts.size()));
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (unsigned w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < pts.size(); i += workers) out[i] = evaluate(f, pts[i]);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

inline void add_edge(std::set<std::pair<int, int>>& edges, int a, int b) {
  if (a != b) edges.insert({std::min(a, b), std::max(a, b)});
}

// Kuhn triangulation of a regular grid with `per_axis` points per axis:
// vertices v and v + e_S are adjacent for every non-empty coordinate subset S.
inline void grid_complex(Eigen::Index dim, int per_axis, std::vector<Point>& unit_pts,
                         std::set<std::pair<int, int>>& edges,
                         std::vector<std::vector<int>>& simplices) {
  const int total = static_cast<int>(std::pow(per_axis, static_cast<double>(dim)));
  auto index_of = [&](const std::vector<int>& c) {
    int idx = 0;
    for (Eigen::Index d = dim - 1; d >= 0; --d) idx = idx * per_axis + c[static_cast<std::size_t>(d)];
    return idx;
  };
  std::vector<int> coord(static_cast<std::size_t>(dim));
  for (int i = 0; i < total; ++i) {
    int r = i;
    Point u(dim);
    for (Eigen::Index d = 0; d < dim; ++d) {
      coord[static_cast<std::size_t>(d)] = r % per_axis;
      r /= per_axis;
      u(d) = static_cast<double>(coord[static_cast<std::size_t>(d)]) / (per_axis - 1);
    }
    unit_pts.push_back(u);
    for (unsigned mask = 1; mask < (1u << dim); ++mask) {
      std::vector<int> c2 = coord;
      bool inside = true;
      for (Eigen::Index d = 0; d < dim; ++d)
        if (mask & (1u << d)) inside &= ++c2[static_cast<std::size_t>(d)] < per_axis;
      if (inside) add_edge(edges, i, index_of(c2));
    }
    // One simplex per permutation of the axes inside the cube at this corner.
    bool corner = true;
    for (Eigen::Index d = 0; d < dim; ++d) corner &= coord[static_cast<std::size_t>(d)] + 1 < per_axis;
    if (!corner) continue;
    std::vector<int> perm(static_cast<std::size_t>(dim));
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::vector<int> s{i};
      std::vector<int> c2 = coord;
      for (int axis : perm) {
        ++c2[static_cast<std::size_t>(axis)];
        s.push_back(index_of(c2));
      }
      simplices.push_back(std::move(s));
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
}

}  // namespace detail

/**
 * @brief Sample the objective and triangulate the samples.
 *
 * 1-D uses a uniform grid with both end points and a chain triangulation.
 * 2-D uses Sobol points plus the box corners, Delaunay-triangulated in unit
 * coordinates. Higher dimensions use a Kuhn-triangulated grid.
 */
inline SimplicialComplex build_complex(const Objective& f, const Box& domain, int n_samples,
                                       unsigned jobs = 1) {
  const Eigen::Index dim = domain.dim();
  if (dim < 1 || domain.upper.size() != dim) throw std::invalid_argument("invalid domain");
  if (!domain.lower.allFinite() || !domain.upper.allFinite())
    throw std::invalid_argument("domain must be finite");
  if ((domain.upper.array() < domain.lower.array()).any())
    throw std::invalid_argument("domain upper bound below lower bound");
  if (n_samples < dim + 2) throw std::invalid_argument("n_samples must be >= dim + 2");

  SimplicialComplex c;
  c.domain = domain;
  std::vector<Point> unit_pts;
  std::set<std::pair<int, int>> edges;
  const Point extent = domain.upper - domain.lower;

  if (dim == 1) {
    for (int i = 0; i < n_samples; ++i) {
      Point u(1);
      u(0) = static_cast<double>(i) / (n_samples - 1);
      unit_pts.push_back(u);
      if (i > 0) {
        detail::add_edge(edges, i - 1, i);
        c.simplices.push_back({i - 1, i});
      }
    }
    c.covering_radius = 0.5 * extent(0) / (n_samples - 1);
  } else if (dim == 2) {
    std::vector<Eigen::Vector2d> flat;
    auto push = [&](double x, double y) {
      const Eigen::Vector2d p(x, y);
      if (std::find(flat.begin(), flat.end(), p) == flat.end()) flat.push_back(p);
    };
    push(0, 0);
    push(1, 0);
    push(1, 1);
    push(0, 1);
    SobolSequence sobol(2);
    // Skip Sobol points that coincide with corners until n_samples are placed.
    while (static_cast<int>(flat.size()) < n_samples) {
      const auto s = sobol.next();
      push(s[0], s[1]);
    }
    const auto tris = delaunay_unit_square(flat);
    for (const auto& p : flat) unit_pts.push_back(Point(p));
    double cover = 0.0;
    for (const auto& t : tris) {
      c.simplices.push_back({t[0], t[1], t[2]});
      for (int e = 0; e < 3; ++e) detail::add_edge(edges, t[e], t[(e + 1) % 3]);
      // Every point of a triangle is within its longest edge of a vertex.
      for (int e = 0; e < 3; ++e) {
        const Eigen::Vector2d a = flat[static_cast<std::size_t>(t[e])].cwiseProduct(extent);
        const Eigen::Vector2d b = flat[static_cast<std::size_t>(t[(e + 1) % 3])].cwiseProduct(extent);
        cover = std::max(cover, (a - b).norm());
      }
    }
    c.covering_radius = cover;
  } else {
    int per_axis = 2;
    while (std::pow(per_axis + 1, static_cast<double>(dim)) <= n_samples) ++per_axis;
    detail::grid_complex(dim, per_axis, unit_pts, edges, c.simplices);
    c.covering_radius = 0.5 * extent.norm() / (per_axis - 1);
  }

  c.vertices.reserve(unit_pts.size());
  for (const auto& u : unit_pts) c.vertices.push_back(domain.from_unit(u));
  c.values = detail::evaluate_all(f, c.vertices, jobs);
  c.neighbors.assign(c.vertices.size(), {});
  for (const auto& [a, b] : edges) {
    c.neighbors[static_cast<std::size_t>(a)].push_back(b);
    c.neighbors[static_cast<std::size_t>(b)].push_back(a);
    // a < b, so a tie orients the edge toward the larger index.
    const bool a_low = c.values[static_cast<std::size_t>(a)] <= c.values[static_cast<std::size_t>(b)];
    c.edges.emplace_back(a_low ? a : b, a_low ? b : a);
  }
  return c;
}

/// Vertices whose incident edges all point away: strictly lower than every neighbour.
inline MinimizerSet extract_minimizers(const SimplicialComplex& c) {
  MinimizerSet out;
  for (std::size_t v = 0; v < c.vertices.size(); ++v) {
    bool minimal = !c.neighbors[v].empty();
    for (int n : c.neighbors[v]) minimal &= c.values[v] < c.values[static_cast<std::size_t>(n)];
    if (!minimal) continue;
    Minimizer m;
    m.vertex = static_cast<int>(v);
    m.star.lower = c.vertices[v];
    m.star.upper = c.vertices[v];
    for (const auto& s : c.simplices) {
      if (std::find(s.begin(), s.end(), static_cast<int>(v)) == s.end()) continue;
      for (int i : s) {
        m.star.lower = m.star.lower.cwiseMin(c.vertices[static_cast<std::size_t>(i)]);
        m.star.upper = m.star.upper.cwiseMax(c.vertices[static_cast<std::size_t>(i)]);
      }
    }
    out.push_back(std::move(m));
  }
  return out;
}

namespace detail {

struct LocalResult {
  Point x;
  double value;
  int evaluations;
  bool converged;
};

inline LocalResult golden_section(const Objective& f, double a, double b, double tol, int budget) {
  constexpr double inv_phi = 0.6180339887498949;
  int evals = 0;
  auto eval = [&](double t) {
    ++evals;
    Point p(1);
    p(0) = t;
    return evaluate(f, p);
  };
  double c = b - inv_phi * (b - a), d = a + inv_phi * (b - a);
  double fc = eval(c), fd = eval(d);
  while (b - a > tol) {
    if (evals >= budget) break;
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = eval(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = eval(d);
    }
  }
  Point x(1);
  x(0) = fc < fd ? c : d;
  return {x, std::min(fc, fd), evals, b - a <= tol};
}

inline LocalResult nelder_mead(const Objective& f, const Box& box, const Point& start, double tol,
                               int budget) {
  const Eigen::Index n = start.size();
  int evals = 0;
  auto eval = [&](const Point& p) {
    ++evals;
    return evaluate(f, box.clamp(p));
  };
  std::vector<Point> simplex{start};
  for (Eigen::Index i = 0; i < n; ++i) {
    Point p = start;
    const double span = box.upper(i) - box.lower(i);
    const double step = 0.25 * (span > 0.0 ? span : 1.0);
    p(i) += (p(i) + step <= box.upper(i)) ? step : -step;
    simplex.push_back(box.clamp(p));
  }
  std::vector<double> fv;
  for (const auto& p : simplex) fv.push_back(eval(p));
  std::vector<int> order(simplex.size());
  bool converged = false;
  while (evals < budget) {
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
    const int best = order.front(), worst = order.back(), second = order[order.size() - 2];
    double size = 0.0;
    for (const auto& p : simplex) size = std::max(size, (p - simplex[best]).cwiseAbs().maxCoeff());
    if (fv[worst] - fv[best] <= tol && size <= std::sqrt(tol)) {
      converged = true;
      break;
    }
    Point centroid = Point::Zero(n);
    for (std::size_t i = 0; i < simplex.size(); ++i)
      if (static_cast<int>(i) != worst) centroid += simplex[i];
    centroid /= static_cast<double>(n);
    const Point xr = box.clamp(centroid + (centroid - simplex[worst]));
    const double fr = eval(xr);
    if (fr < fv[best]) {
      const Point xe = box.clamp(centroid + 2.0 * (centroid - simplex[worst]));
      const double fe = eval(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
    } else {
      const Point xc = box.clamp(centroid + 0.5 * (simplex[worst] - centroid));
      const double fc = eval(xc);
      if (fc < fv[worst]) {
        simplex[worst] = xc;
        fv[worst] = fc;
      } else {
        for (std::size_t i = 0; i < simplex.size(); ++i) {
          if (static_cast<int>(i) == best) continue;
          simplex[i] = box.clamp(simplex[best] + 0.5 * (simplex[i] - simplex[best]));
          fv[i] = eval(simplex[i]);
        }
      }
    }
  }
  const auto it = std::min_element(fv.begin(), fv.end());
  return {box.clamp(simplex[static_cast<std::size_t>(it - fv.begin())]), *it, evals, converged};
}

}  // namespace detail

/**
 * @brief Bounded local search inside each star; keeps the best of the refined
 * points and the sampled vertices.
 */
inline ShgoResult refine(const Objective& f, const SimplicialComplex& c, const MinimizerSet& ms,
                         const Options& opt = {}) {
  if (ms.empty()) throw std::invalid_argument("minimizer set is empty");
  ShgoResult r;
  r.minimizers = static_cast<int>(ms.size());
  const auto best_vertex = std::min_element(c.values.begin(), c.values.end()) - c.values.begin();
  r.argmin = c.vertices[static_cast<std::size_t>(best_vertex)];
  r.value = c.values[static_cast<std::size_t>(best_vertex)];
  for (const auto& m : ms) {
    const Point& v = c.vertices[static_cast<std::size_t>(m.vertex)];
    const double fv = c.values[static_cast<std::size_t>(m.vertex)];
    detail::LocalResult local =
        c.domain.dim() == 1
            ? detail::golden_section(f, m.star.lower(0), m.star.upper(0), opt.local_tol, opt.budget)
            : detail::nelder_mead(f, m.star, v, opt.local_tol, opt.budget);
    r.evaluations += local.evaluations;
    r.converged &= local.converged;
    if (fv <= local.value) {
      local.x = v;
      local.value = fv;
    }
    r.local_minima.emplace_back(local.x, local.value);
    if (local.value < r.value) {
      r.value = local.value;
      r.argmin = local.x;
    }
  }
  return r;
}

/// build -> extract -> refine. A flat complex (no strict minimizer) refines
/// around its lowest vertex instead.
inline ShgoResult minimize(const Objective& f, const Box& domain, const Options& opt = {}) {
  const SimplicialComplex c = build_complex(f, domain, opt.n_samples, opt.jobs);
  MinimizerSet ms = extract_minimizers(c);
  const int strict_minimizers = static_cast<int>(ms.size());
  if (ms.empty()) {
    const auto v = std::min_element(c.values.begin(), c.values.end()) - c.values.begin();
    Minimizer m;
    m.vertex = static_cast<int>(v);
    m.star.lower = m.star.upper = c.vertices[static_cast<std::size_t>(v)];
    for (const auto& s : c.simplices) {
      if (std::find(s.begin(), s.end(), m.vertex) == s.end()) continue;
      for (int i : s) {
        m.star.lower = m.star.lower.cwiseMin(c.vertices[static_cast<std::size_t>(i)]);
        m.star.upper = m.star.upper.cwiseMax(c.vertices[static_cast<std::size_t>(i)]);
      }
    }
    ms.push_back(std::move(m));
  }
  ShgoResult r = refine(f, c, ms, opt);
  r.minimizers = strict_minimizers;
  r.evaluations += static_cast<int>(c.vertices.size());
  if (std::isfinite(opt.lipschitz_hint)) r.error_bound = opt.lipschitz_hint * c.covering_radius;
  return r;
}

}  // namespace ccgp::shgo
