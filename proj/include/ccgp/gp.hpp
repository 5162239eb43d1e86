#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ccgp {

class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Squared-exponential kernel with unit signal variance, so K(x, x) = 1.
struct RbfKernel {
  double length_scale{1.0};

  template <class A, class B>
  double operator()(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) const {
    return std::exp(-0.5 * (x - y).squaredNorm() / (length_scale * length_scale));
  }
};

struct Posterior {
  double mean{0.0};
  double variance{1.0};
};

/**
 * @brief Gaussian-process regression of distance-to-collision.
 *
 * Training states are rows of X. The Cholesky factor of (K + s2 I) is
 * computed once at fit time together with alpha = (K + s2 I)^-1 d and the
 * explicit inverse, which the truncated query path reads from.
 *
 * Queries never mutate the model, so a fitted model can be shared freely
 * between threads.
 */
class GpDistanceModel {
public:
  /// Error budget of the truncated query path (absolute, on mean and variance).
  static constexpr double kTruncationTolerance = 1e-12;

  static GpDistanceModel fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& d, RbfKernel kernel,
                             double noise_variance) {
    if (X.rows() < 1) throw std::invalid_argument("GP needs at least one training state");
    if (X.rows() != d.size()) throw std::invalid_argument("X and d sizes differ");
    if (!(noise_variance > 0.0) || !std::isfinite(noise_variance))
      throw std::invalid_argument("noise variance must be > 0");
    if (!(kernel.length_scale > 0.0)) throw std::invalid_argument("length scale must be > 0");
    if (!X.allFinite()) throw std::invalid_argument("training states must be finite");
    if (!d.allFinite()) throw std::invalid_argument("training distances must be finite");

    GpDistanceModel m;
    m.Xt_ = X.transpose();
    m.d_ = d;
    m.kernel_ = kernel;
    m.noise_variance_ = noise_variance;
    const Eigen::Index n = X.rows();

    const Eigen::MatrixXd gram = m.gram();
    for (const double jitter : {0.0, 1e-10, 1e-8}) {
      Eigen::MatrixXd a = gram;
      a.diagonal().array() += noise_variance + jitter;
      m.llt_.compute(a);
      if (m.llt_.info() == Eigen::Success) {
        m.jitter_ = jitter;
        break;
      }
      if (jitter == 1e-8) throw NumericError("Cholesky factorization of K + s2 I failed");
    }
    m.alpha_ = m.llt_.solve(d);
    m.inverse_ = m.llt_.solve(Eigen::MatrixXd::Identity(n, n));
    m.inverse_ = 0.5 * (m.inverse_ + m.inverse_.transpose()).eval();

    // Index j can be dropped from a query once k_j * w_j <= tol / n, which
    // bounds the total error on both mean and variance by tol.
    m.cutoff_sq_.resize(n);
    const double ell2 = kernel.length_scale * kernel.length_scale;
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = std::max(std::abs(m.alpha_(j)), 2.0 * m.inverse_.col(j).cwiseAbs().sum());
      const double ratio = static_cast<double>(n) * w / kTruncationTolerance;
      m.cutoff_sq_(j) = ratio > 1.0 ? 2.0 * ell2 * std::log(ratio) : -1.0;
    }
    return m;
  }

  Eigen::Index size() const { return Xt_.cols(); }
  Eigen::Index dim() const { return Xt_.rows(); }
  Eigen::MatrixXd X() const { return Xt_.transpose(); }
  auto state(Eigen::Index i) const { return Xt_.col(i); }
  const Eigen::VectorXd& d() const { return d_; }
  const RbfKernel& kernel() const { return kernel_; }
  double noise_variance() const { return noise_variance_; }
  double jitter() const { return jitter_; }
  const Eigen::LLT<Eigen::MatrixXd>& factorization() const { return llt_; }
  /// (K + s2 I)^-1 d
  const Eigen::VectorXd& alpha() const { return alpha_; }
  /// (K + s2 I)^-1, symmetrized.
  const Eigen::MatrixXd& inverse() const { return inverse_; }

  Eigen::MatrixXd gram() const {
    const Eigen::Index n = size();
    Eigen::MatrixXd k(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      k(j, j) = 1.0;
      for (Eigen::Index i = j + 1; i < n; ++i) k(i, j) = k(j, i) = kernel_(Xt_.col(i), Xt_.col(j));
    }
    return k;
  }

  template <class Derived>
  Eigen::VectorXd kernel_vector(const Eigen::MatrixBase<Derived>& x) const {
    Eigen::VectorXd k(size());
    for (Eigen::Index i = 0; i < size(); ++i) k(i) = kernel_(x, Xt_.col(i));
    return k;
  }

  /// Posterior through the full kernel vector and triangular solves.
  template <class Derived>
  Posterior posterior_dense(const Eigen::MatrixBase<Derived>& x) const {
    check_query(x);
    const Eigen::VectorXd k = kernel_vector(x);
    const Eigen::VectorXd v = llt_.matrixL().solve(k);
    return clamp({k.dot(alpha_), 1.0 - v.squaredNorm()});
  }

  /// Posterior restricted to training states whose kernel weight can matter.
  template <class Derived>
  Posterior posterior(const Eigen::MatrixBase<Derived>& x) const {
    check_query(x);
    thread_local std::vector<Eigen::Index> idx;
    thread_local std::vector<double> kv;
    idx.clear();
    kv.clear();
    const double inv2l2 = 0.5 / (kernel_.length_scale * kernel_.length_scale);
    for (Eigen::Index j = 0; j < size(); ++j) {
      const double r2 = (Xt_.col(j) - x).squaredNorm();
      if (r2 < cutoff_sq_(j)) {
        idx.push_back(j);
        const double kj = std::exp(-r2 * inv2l2);
        assert(kj >= 0.0 && kj <= 1.0);
        kv.push_back(kj);
      }
    }
    double mean = 0.0, quad = 0.0;
    const std::size_t m = idx.size();
    for (std::size_t a = 0; a < m; ++a) {
      mean += kv[a] * alpha_(idx[a]);
      const double* col = inverse_.col(idx[a]).data();
      double row = 0.0;
      for (std::size_t b = 0; b < a; ++b) row += col[idx[b]] * kv[b];
      quad += kv[a] * (2.0 * row + col[idx[a]] * kv[a]);
    }
    return clamp({mean, 1.0 - quad});
  }

  /// Mean over sqrt(2 * variance): the deterministic chance-constraint surrogate.
  template <class Derived>
  double g(const Eigen::MatrixBase<Derived>& x) const {
    return g_from(posterior(x));
  }

  class LocalView;

  /// Training states that can matter anywhere within `radius` of `center`,
  /// dropping those whose total effect stays below `tolerance`.
  LocalView local_view(const Eigen::VectorXd& center, double radius,
                       double tolerance = kTruncationTolerance) const;

  static double g_from(const Posterior& p) {
    const double var = std::max(p.variance, std::numeric_limits<double>::min());
    return p.mean / std::sqrt(2.0 * var);
  }

private:
  template <class Derived>
  void check_query(const Eigen::MatrixBase<Derived>& x) const {
    if (x.size() != dim()) throw std::invalid_argument("query dimension does not match model");
    if (!x.allFinite()) throw std::invalid_argument("query state must be finite");
  }

  static Posterior clamp(Posterior p) {
    p.variance = std::clamp(p.variance, 0.0, 1.0);
    return p;
  }

  Eigen::MatrixXd Xt_;
  Eigen::VectorXd d_;
  RbfKernel kernel_;
  double noise_variance_{0.0};
  double jitter_{0.0};
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd inverse_;
  Eigen::VectorXd cutoff_sq_;
};

/**
 * @brief The model restricted to the training states that can influence
 * queries inside a ball, gathered into contiguous storage.
 *
 * Uses the same per-index cutoff as GpDistanceModel::posterior, widened by
 * the ball radius, so every query inside the ball is within the truncation
 * tolerance of the dense posterior. Batched queries go through one
 * matrix-matrix product.
 */
class GpDistanceModel::LocalView {
public:
  LocalView(const GpDistanceModel& m, const Eigen::VectorXd& center, double radius,
            double tolerance = kTruncationTolerance) {
    if (center.size() != m.dim()) throw std::invalid_argument("query dimension does not match model");
    if (!(tolerance >= kTruncationTolerance)) throw std::invalid_argument("view tolerance below the model's");
    // The cutoff scales as 2 l^2 log(n w / tol).
    const double shrink = 2.0 * m.kernel_.length_scale * m.kernel_.length_scale * std::log(tolerance / kTruncationTolerance);
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < m.size(); ++j) {
      const double cut = m.cutoff_sq_(j) - shrink;
      if (m.cutoff_sq_(j) <= 0.0 || cut <= 0.0) continue;
      const double gap = std::max(0.0, (m.Xt_.col(j) - center).norm() - radius);
      if (gap * gap < cut) idx.push_back(j);
    }
    const auto k = static_cast<Eigen::Index>(idx.size());
    Xt_.resize(m.dim(), k);
    alpha_.resize(k);
    A_.resize(k, k);
    for (Eigen::Index a = 0; a < k; ++a) {
      Xt_.col(a) = m.Xt_.col(idx[static_cast<std::size_t>(a)]);
      alpha_(a) = m.alpha_(idx[static_cast<std::size_t>(a)]);
      for (Eigen::Index b = 0; b < k; ++b)
        A_(b, a) = m.inverse_(idx[static_cast<std::size_t>(b)], idx[static_cast<std::size_t>(a)]);
    }
    inv2l2_ = 0.5 / (m.kernel_.length_scale * m.kernel_.length_scale);
  }

  Eigen::Index size() const { return Xt_.cols(); }

  template <class Derived>
  Posterior posterior(const Eigen::MatrixBase<Derived>& x) const {
    if (size() == 0) return {0.0, 1.0};
    const Eigen::VectorXd k = (-(Xt_.colwise() - x).colwise().squaredNorm().array() * inv2l2_).exp().matrix();
    return GpDistanceModel::clamp({k.dot(alpha_), 1.0 - k.dot(A_ * k)});
  }

  template <class Derived>
  double g(const Eigen::MatrixBase<Derived>& x) const {
    return g_from(posterior(x));
  }

  /// g at every column of Q.
  Eigen::VectorXd g_batch(const Eigen::MatrixXd& Q) const {
    Eigen::VectorXd out(Q.cols());
    if (size() == 0) {
      out.setZero();
      return out;
    }
    Eigen::MatrixXd K(size(), Q.cols());
    for (Eigen::Index q = 0; q < Q.cols(); ++q)
      K.col(q) = (-(Xt_.colwise() - Q.col(q)).colwise().squaredNorm().array() * inv2l2_).exp().matrix();
    const Eigen::MatrixXd AK = A_ * K;
    for (Eigen::Index q = 0; q < Q.cols(); ++q)
      out(q) = g_from(GpDistanceModel::clamp({K.col(q).dot(alpha_), 1.0 - K.col(q).dot(AK.col(q))}));
    return out;
  }

private:
  Eigen::MatrixXd Xt_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd A_;
  double inv2l2_{0.5};
};

inline GpDistanceModel::LocalView GpDistanceModel::local_view(const Eigen::VectorXd& center,
                                                               double radius, double tolerance) const {
  return LocalView(*this, center, radius, tolerance);
}

/// log p(d | X, l, s2) for the RBF prior with unit signal variance.
inline double log_marginal_likelihood(const GpDistanceModel& m) {
  const auto& l = m.factorization().matrixLLT();
  const double logdet_half = l.diagonal().array().log().sum();
  return -0.5 * m.d().dot(m.alpha()) - logdet_half -
         0.5 * static_cast<double>(m.size()) * std::log(2.0 * std::numbers::pi);
}

struct LengthScaleSelection {
  double length_scale{0.0};
  std::vector<std::pair<double, double>> scores;  // (length scale, log marginal likelihood)
};

inline std::vector<double> default_length_scale_grid(double workspace_diagonal) {
  std::vector<double> grid;
  for (double f : {0.1, 0.2, 0.5, 1.0, 2.0}) grid.push_back(f * workspace_diagonal / 10.0);
  return grid;
}

inline LengthScaleSelection select_length_scale(const Eigen::MatrixXd& X, const Eigen::VectorXd& d,
                                                double noise_variance,
                                                const std::vector<double>& candidates) {
  if (candidates.empty()) throw std::invalid_argument("no length-scale candidates");
  LengthScaleSelection out;
  double best = -std::numeric_limits<double>::infinity();
  for (double ell : candidates) {
    // Factor only; fitting the full model would also build the inverse.
    const RbfKernel k{ell};
    const Eigen::Index n = X.rows();
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      a(j, j) = 1.0 + noise_variance;
      for (Eigen::Index i = j + 1; i < n; ++i) a(i, j) = a(j, i) = k(X.row(i), X.row(j));
    }
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    double score = -std::numeric_limits<double>::infinity();
    if (llt.info() == Eigen::Success) {
      const Eigen::VectorXd alpha = llt.solve(d);
      score = -0.5 * d.dot(alpha) - llt.matrixLLT().diagonal().array().log().sum() -
              0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    }
    out.scores.emplace_back(ell, score);
    if (score > best) {
      best = score;
      out.length_scale = ell;
    }
  }
  if (!std::isfinite(best)) throw NumericError("every length-scale candidate failed to fit");
  return out;
}

// ---------------------------------------------------------------------------
// Lipschitz machinery

struct LipschitzBound {
  double L_q{std::numeric_limits<double>::infinity()};
  double L_k{std::numeric_limits<double>::quiet_NaN()};
  /// Largest eigenvalue of (s2 I + K)^-1. A lower bound only when the
  /// iteration stopped early on a vacuous bound.
  double lambda_max{0.0};
  Eigen::Index n{0};
  bool valid{false};
  int iterations{0};

  double composed() const { return L_q * L_k; }
};

/// Lemma-style q(k) = k^T M d / sqrt(2 (1 - k^T M k)) with M = (s2 I + K)^-1.
inline double lemma_q(const GpDistanceModel& m, const Eigen::VectorXd& k) {
  const double num = k.dot(m.alpha());
  const double den = 2.0 * (1.0 - k.dot(m.inverse() * k));
  return num / std::sqrt(den);
}

struct PowerIterationOptions {
  double tolerance{1e-10};
  int max_iterations{10000};
};

/**
 * @brief Lipschitz constant of q over [0,1]^n:
 * L_q = |M d| / sqrt(2) * (1 / (1 - lambda_max n))^(3/2).
 *
 * lambda_max comes from power iteration on M through the stored Cholesky
 * factor. Rayleigh quotients are lower bounds on lambda_max, so the iteration
 * stops as soon as one of them proves lambda_max * n >= 1.
 */
inline LipschitzBound lipschitz_q(const GpDistanceModel& m, PowerIterationOptions opt = {}) {
  LipschitzBound b;
  b.n = m.size();
  const double n = static_cast<double>(b.n);

  std::mt19937_64 rng(0x5eed);
  std::uniform_real_distribution<double> unit(0.5, 1.5);
  Eigen::VectorXd x(b.n);
  for (Eigen::Index i = 0; i < b.n; ++i) x(i) = unit(rng);
  x.normalize();

  double lambda = 0.0;
  bool converged = false;
  for (int it = 1; it <= opt.max_iterations; ++it) {
    const Eigen::VectorXd y = m.factorization().solve(x);
    lambda = x.dot(y);
    b.iterations = it;
    if (lambda * n >= 1.0) {
      b.lambda_max = lambda;
      b.valid = false;
      return b;
    }
    const double residual = (y - lambda * x).norm();
    x = y.normalized();
    if (residual <= opt.tolerance * lambda) {
      converged = true;
      break;
    }
  }
  if (!converged) throw NumericError("power iteration for lambda_max did not converge");
  b.lambda_max = lambda;
  b.valid = lambda * n < 1.0;
  if (b.valid)
    b.L_q = m.alpha().norm() / std::numbers::sqrt2 * std::pow(1.0 / (1.0 - lambda * n), 1.5);
  return b;
}

/**
 * @brief Lipschitz constant of x -> k(x) for n RBF components.
 *
 * Each component has gradient norm (r / l^2) exp(-r^2 / 2l^2), maximal at
 * r = l with value e^-1/2 / l. When every training-to-query distance is known
 * to be at most `max_distance` < l, the maximum is attained at that distance.
 */
inline double lipschitz_k(const RbfKernel& kernel, Eigen::Index n,
                          double max_distance = std::numeric_limits<double>::infinity()) {
  const double ell = kernel.length_scale;
  const double r = std::min(ell, std::max(0.0, max_distance));
  const double per_component = r / (ell * ell) * std::exp(-0.5 * r * r / (ell * ell));
  return std::sqrt(static_cast<double>(n)) * per_component;
}

inline LipschitzBound lipschitz_bound(const GpDistanceModel& m,
                                      double max_distance = std::numeric_limits<double>::infinity(),
                                      PowerIterationOptions opt = {}) {
  LipschitzBound b = lipschitz_q(m, opt);
  b.L_k = lipschitz_k(m.kernel(), m.size(), max_distance);
  return b;
}

// ---------------------------------------------------------------------------
// Appendix inequalities, exposed as a checker.

struct AppendixViolation {
  std::size_t sample{0};
  int lemma{0};  // 1: quadratic-form difference, 2: powered difference, 3: powered vector
  int power{0};
  double lhs{0.0};
  double rhs{0.0};
};

struct AppendixReport {
  std::size_t checks{0};
  double lambda_max{0.0};
  double worst_ratio{0.0};  // max lhs / rhs over checks with rhs > 0
  std::vector<AppendixViolation> violations;

  bool ok() const { return violations.empty(); }
};

/**
 * Evaluates, for each (x1, x2) in [0,1]^n and m in {1,2,3}:
 *   |x1'Mx1 - x2'Mx2|                 <= 2 lmax sqrt(n) |x1 - x2|
 *   |(x1'Mx1)^m - (x2'Mx2)^m|         <= 2/sqrt(n) m (n lmax)^m |x1 - x2|
 *   |(x1'Mx1)^m x1 - (x2'Mx2)^m x2|   <= (1 + 2m) (lmax n)^m |x1 - x2|
 */
inline AppendixReport check_appendix_bounds(
    const Eigen::MatrixXd& M,
    const std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>>& samples) {
  if (M.rows() != M.cols()) throw std::invalid_argument("M must be square");
  AppendixReport rep;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericError("eigenvalue solve failed");
  const double lmax = es.eigenvalues().maxCoeff();
  rep.lambda_max = lmax;
  const double n = static_cast<double>(M.rows());

  auto record = [&](std::size_t s, int lemma, int power, double lhs, double rhs) {
    ++rep.checks;
    if (rhs > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, lhs / rhs);
    // Slack covers rounding in the two sides only.
    if (lhs > rhs * (1.0 + 1e-12) + 1e-14) rep.violations.push_back({s, lemma, power, lhs, rhs});
  };

  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& [x1, x2] = samples[s];
    if (x1.size() != M.rows() || x2.size() != M.rows())
      throw std::invalid_argument("sample dimension does not match M");
    const double q1 = x1.dot(M * x1), q2 = x2.dot(M * x2);
    const double dist = (x1 - x2).norm();
    record(s, 1, 1, std::abs(q1 - q2), 2.0 * lmax * std::sqrt(n) * dist);
    for (int p = 1; p <= 3; ++p) {
      const double lhs2 = std::abs(std::pow(q1, p) - std::pow(q2, p));
      const double rhs2 = 2.0 / std::sqrt(n) * p * std::pow(n * lmax, p) * dist;
      record(s, 2, p, lhs2, rhs2);
      const double lhs3 = (std::pow(q1, p) * x1 - std::pow(q2, p) * x2).norm();
      const double rhs3 = (1.0 + 2.0 * p) * std::pow(lmax * n, p) * dist;
      record(s, 3, p, lhs3, rhs3);
    }
  }
  return rep;
}

/// 1 + sum_{m=1}^{terms} a^m / m! prod_{j<m} (1/2 + j), which tends to (1 - a)^(-1/2).
inline double series_inverse_sqrt(double a, int terms) {
  double sum = 1.0, coeff = 1.0, power = 1.0;
  for (int m = 1; m <= terms; ++m) {
    coeff *= (0.5 + (m - 1)) / m;
    power *= a;
    sum += coeff * power;
  }
  return sum;
}

/// sum_{m=1}^{terms} m a^m / m! prod_{j<m} (1/2 + j), which tends to a / (2 (1 - a)^(3/2)).
inline double series_weighted(double a, int terms) {
  double sum = 0.0, coeff = 1.0, power = 1.0;
  for (int m = 1; m <= terms; ++m) {
    coeff *= (0.5 + (m - 1)) / m;
    power *= a;
    sum += m * coeff * power;
  }
  return sum;
}

}  // namespace ccgp
