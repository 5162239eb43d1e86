#pragma once

// Multimodal test functions for the SHGO benchmark, with a dense-grid oracle
// that shares no code with the optimizer.

#include "ccgp/shgo.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace ccgp::shgo {

struct TestFunction {
  std::string name;
  Box domain;
  std::function<double(const Point&)> fn;
  int n_samples;
};

inline Box box1(double lo, double hi) {
  Point l(1), u(1);
  l << lo;
  u << hi;
  return {l, u};
}

inline Box box2(double lx, double hx, double ly, double hy) {
  Point l(2), u(2);
  l << lx, ly;
  u << hx, hy;
  return {l, u};
}

inline std::vector<TestFunction> standard_suite() {
  using std::cos;
  using std::sin;
  constexpr double pi = std::numbers::pi;
  std::vector<TestFunction> s;
  s.push_back({"sin13_sin27", box1(0, 1), [](const Point& p) { return sin(13 * p(0)) * sin(27 * p(0)) + 1.0; }, 64});
  s.push_back({"shifted_parabola", box1(0, 1), [](const Point& p) { return (p(0) - 0.3) * (p(0) - 0.3); }, 64});
  s.push_back({"forrester", box1(0, 1),
               [](const Point& p) { return std::pow(6 * p(0) - 2, 2) * sin(12 * p(0) - 4); }, 64});
  s.push_back({"gramacy_lee", box1(0.5, 2.5),
               [=](const Point& p) { return sin(10 * pi * p(0)) / (2 * p(0)) + std::pow(p(0) - 1, 4); }, 64});
  s.push_back({"damped_sine", box1(0, 1.2), [](const Point& p) { return -(1.4 - 3 * p(0)) * sin(18 * p(0)); }, 64});
  s.push_back({"rastrigin_1d", box1(-4.1, 5.12),
               [=](const Point& p) { return 10 + p(0) * p(0) - 10 * cos(2 * pi * p(0)); }, 128});
  s.push_back({"himmelblau", box2(-5, 5, -5, 5),
               [](const Point& p) {
                 return std::pow(p(0) * p(0) + p(1) - 11, 2) + std::pow(p(0) + p(1) * p(1) - 7, 2);
               },
               128});
  s.push_back({"six_hump_camel", box2(-3, 3, -2, 2),
               [](const Point& p) {
                 const double x = p(0), y = p(1);
                 return (4 - 2.1 * x * x + x * x * x * x / 3) * x * x + x * y + (-4 + 4 * y * y) * y * y;
               },
               128});
  s.push_back({"branin", box2(-5, 10, 0, 15),
               [=](const Point& p) {
                 const double b = 5.1 / (4 * pi * pi), c = 5 / pi, t = 1 / (8 * pi);
                 return std::pow(p(1) - b * p(0) * p(0) + c * p(0) - 6, 2) + 10 * (1 - t) * cos(p(0)) + 10;
               },
               128});
  s.push_back({"booth", box2(-10, 10, -10, 10),
               [](const Point& p) {
                 return std::pow(p(0) + 2 * p(1) - 7, 2) + std::pow(2 * p(0) + p(1) - 5, 2);
               },
               64});
  s.push_back({"matyas", box2(-10, 10, -10, 10),
               [](const Point& p) { return 0.26 * (p(0) * p(0) + p(1) * p(1)) - 0.48 * p(0) * p(1); }, 64});
  s.push_back({"styblinski_tang", box2(-5, 5, -5, 5),
               [](const Point& p) {
                 double v = 0.0;
                 for (int i = 0; i < 2; ++i) v += std::pow(p(i), 4) - 16 * p(i) * p(i) + 5 * p(i);
                 return 0.5 * v;
               },
               128});
  return s;
}

/**
 * Dense-grid minimum: `per_axis` points per axis, then repeated zooming onto
 * a 21-point-per-axis grid around the incumbent.
 */
inline std::pair<Point, double> grid_oracle(const std::function<double(const Point&)>& f,
                                            const Box& box, int per_axis, int zoom_levels = 12) {
  const Eigen::Index dim = box.dim();
  auto scan = [&](const Box& b, int k, Point& best_x, double& best_f) {
    const long total = static_cast<long>(std::pow(k, static_cast<double>(dim)));
    Point x(dim);
    for (long i = 0; i < total; ++i) {
      long r = i;
      for (Eigen::Index d = 0; d < dim; ++d) {
        const double frac = static_cast<double>(r % k) / (k - 1);
        x(d) = b.lower(d) + frac * (b.upper(d) - b.lower(d));
        r /= k;
      }
      const double v = f(x);
      if (v < best_f) {
        best_f = v;
        best_x = x;
      }
    }
  };
  Point best_x = box.lower;
  double best_f = std::numeric_limits<double>::infinity();
  scan(box, per_axis, best_x, best_f);
  Point half = (box.upper - box.lower) / (per_axis - 1);
  for (int level = 0; level < zoom_levels; ++level) {
    const Box local{(best_x - half).cwiseMax(box.lower), (best_x + half).cwiseMin(box.upper)};
    scan(local, 21, best_x, best_f);
    half /= 10.0;
  }
  return {best_x, best_f};
}

}  // namespace ccgp::shgo
