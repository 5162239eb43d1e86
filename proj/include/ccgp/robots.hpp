#pragma once

#include "ccgp/geometry.hpp"
#include "ccgp/gp.hpp"
#include "ccgp/segment.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace ccgp {

using Rng = std::mt19937_64;

/// Zero-mean Gaussian draw with covariance `cov` (PSD; zero rows give zero noise).
inline Eigen::VectorXd gaussian(const Eigen::MatrixXd& cov, Rng& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Eigen::VectorXd z(cov.rows());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = n01(rng);
  if (cov.isDiagonal()) return cov.diagonal().cwiseMax(0.0).cwiseSqrt().cwiseProduct(z);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  const Eigen::VectorXd s = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * s.cwiseProduct(z);
}

// ---------------------------------------------------------------------------
// Plants

/// x' = x + u + m, z = x' + n.
struct LinearPlant {
  Eigen::Matrix2d M = 0.1 * Eigen::Matrix2d::Identity();
  Eigen::Matrix2d N = 0.01 * Eigen::Matrix2d::Identity();
  double u_max{1.0};

  struct Step {
    Eigen::Vector2d x;
    Eigen::Vector2d z;
  };

  Step step(const Eigen::Vector2d& x, const Eigen::Vector2d& u, Rng& rng) const {
    Step s;
    s.x = x + u + gaussian(M, rng);
    s.z = s.x + gaussian(N, rng);
    return s;
  }
};

/**
 * Unicycle at constant speed v with turn-rate control. Speed and turn rate are
 * perturbed each step, and an extra rotation is added to the heading.
 * The state is observed directly with additive noise N.
 */
struct DubinsPlant {
  double v{1.0};
  double tau{0.1};
  double rho{1.0};
  double sigma_v{0.1};
  double sigma_w{0.1};
  double sigma_rot{5.0 * std::numbers::pi / 180.0};
  Eigen::Matrix3d N = 0.01 * Eigen::Matrix3d::Identity();

  static constexpr double kStraight = 1e-6;

  /// Noise-free motion with speed `speed` and turn rate `w`.
  Eigen::Vector3d move(const Eigen::Vector3d& x, double speed, double w) const {
    Eigen::Vector3d out = x;
    const double th = x(2);
    if (std::abs(w) < kStraight) {
      out(0) += speed * tau * std::cos(th);
      out(1) += speed * tau * std::sin(th);
    } else {
      const double r = speed / w;
      out(0) += r * (-std::sin(th) + std::sin(th + w * tau));
      out(1) += r * (std::cos(th) - std::cos(th + w * tau));
      out(2) += w * tau;
    }
    out(2) = wrap_angle(out(2));
    return out;
  }

  Eigen::Vector3d step(const Eigen::Vector3d& x, double w, Rng& rng) const {
    std::normal_distribution<double> n01(0.0, 1.0);
    const double speed = v + sigma_v * n01(rng);
    const double rate = w + sigma_w * n01(rng);
    Eigen::Vector3d out = move(x, speed, rate);
    out(2) = wrap_angle(out(2) + sigma_rot * n01(rng));
    return out;
  }

  Eigen::Vector3d observe(const Eigen::Vector3d& x, Rng& rng) const {
    Eigen::Vector3d z = x + gaussian(N, rng);
    z(2) = wrap_angle(z(2));
    return z;
  }

  /// d move / d state at (x, w) with nominal speed.
  Eigen::Matrix3d jacobian_state(const Eigen::Vector3d& x, double w) const {
    Eigen::Matrix3d F = Eigen::Matrix3d::Identity();
    const double th = x(2);
    if (std::abs(w) < kStraight) {
      F(0, 2) = -v * tau * std::sin(th);
      F(1, 2) = v * tau * std::cos(th);
    } else {
      const double r = v / w;
      F(0, 2) = r * (-std::cos(th) + std::cos(th + w * tau));
      F(1, 2) = r * (-std::sin(th) + std::sin(th + w * tau));
    }
    return F;
  }

  /// d move / d (speed, turn rate) at (x, w) with nominal speed.
  Eigen::Matrix<double, 3, 2> jacobian_input(const Eigen::Vector3d& x, double w) const {
    Eigen::Matrix<double, 3, 2> V;
    const double th = x(2);
    if (std::abs(w) < kStraight) {
      V << tau * std::cos(th), -0.5 * v * tau * tau * std::sin(th),
          tau * std::sin(th), 0.5 * v * tau * tau * std::cos(th),
          0.0, tau;
    } else {
      const double s0 = std::sin(th), c0 = std::cos(th);
      const double s1 = std::sin(th + w * tau), c1 = std::cos(th + w * tau);
      V(0, 0) = (-s0 + s1) / w;
      V(1, 0) = (c0 - c1) / w;
      V(2, 0) = 0.0;
      V(0, 1) = v * (s0 - s1) / (w * w) + v * c1 * tau / w;
      V(1, 1) = -v * (c0 - c1) / (w * w) + v * s1 * tau / w;
      V(2, 1) = tau;
    }
    return V;
  }

  /// Process noise in state coordinates for the filter.
  Eigen::Matrix3d process_noise(const Eigen::Vector3d& x, double w) const {
    const auto V = jacobian_input(x, w);
    Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
    S(0, 0) = sigma_v * sigma_v;
    S(1, 1) = sigma_w * sigma_w;
    Eigen::Matrix3d Q = V * S * V.transpose();
    Q(2, 2) += sigma_rot * sigma_rot;
    return Q;
  }
};

// ---------------------------------------------------------------------------
// Estimation

struct Estimate {
  Eigen::VectorXd x;
  Eigen::MatrixXd P;
};

inline Estimate kalman_predict(const Estimate& e, const Eigen::MatrixXd& A, const Eigen::MatrixXd& B,
                               const Eigen::VectorXd& u, const Eigen::MatrixXd& Q) {
  Estimate out;
  out.x = A * e.x + B * u;
  out.P = A * e.P * A.transpose() + Q;
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  return out;
}

/// Measurement update in Joseph form. `innovation` overrides z - H x (for angles).
inline Estimate kalman_correct(const Estimate& e, const Eigen::MatrixXd& H, const Eigen::VectorXd& innovation,
                               const Eigen::MatrixXd& R) {
  const Eigen::MatrixXd S = H * e.P * H.transpose() + R;
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success || !innovation.allFinite())
    throw NumericError("innovation covariance is singular");
  const Eigen::MatrixXd K = llt.solve(H * e.P).transpose();
  const Eigen::Index n = e.x.size();
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * H;
  Estimate out;
  out.x = e.x + K * innovation;
  out.P = IKH * e.P * IKH.transpose() + K * R * K.transpose();
  out.P = 0.5 * (out.P + out.P.transpose()).eval();
  return out;
}

inline Estimate kalman_update(const Estimate& e, const Eigen::MatrixXd& H, const Eigen::VectorXd& z,
                              const Eigen::MatrixXd& R) {
  return kalman_correct(e, H, z - H * e.x, R);
}

/// Predict with (A, B, Q), then correct with (H, R).
inline Estimate kalman_step(const Estimate& e, const Eigen::VectorXd& u, const Eigen::VectorXd& z,
                            const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                            const Eigen::MatrixXd& H, const Eigen::MatrixXd& R) {
  return kalman_update(kalman_predict(e, A, B, u, Q), H, z, R);
}

inline Estimate kalman_step(const Estimate& e, const LinearPlant& p, const Eigen::Vector2d& u,
                            const Eigen::Vector2d& z) {
  const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
  return kalman_step(e, u, z, I, I, p.M, I, p.N);
}

inline Estimate ekf_step(const Estimate& e, const DubinsPlant& p, double w, const Eigen::Vector3d& z) {
  const Eigen::Vector3d x0 = e.x;
  Estimate pred;
  pred.x = p.move(x0, p.v, w);
  const Eigen::Matrix3d F = p.jacobian_state(x0, w);
  pred.P = F * e.P * F.transpose() + p.process_noise(x0, w);
  pred.P = 0.5 * (pred.P + pred.P.transpose()).eval();
  Eigen::Vector3d innov = z - pred.x;
  innov(2) = wrap_angle(innov(2));
  Estimate out = kalman_correct(pred, Eigen::Matrix3d::Identity(), innov, p.N);
  out.x(2) = wrap_angle(out.x(2));
  return out;
}

// ---------------------------------------------------------------------------
// Control

struct RiccatiOptions {
  double tolerance{1e-10};
  int max_iterations{100000};
};

/// Stabilizing solution of the discrete algebraic Riccati equation by fixed-point iteration.
inline Eigen::MatrixXd dare(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                            const Eigen::MatrixXd& R, RiccatiOptions opt = {}) {
  Eigen::MatrixXd P = Q;
  for (int it = 0; it < opt.max_iterations; ++it) {
    const Eigen::MatrixXd S = R + B.transpose() * P * B;
    const Eigen::MatrixXd K = S.ldlt().solve(B.transpose() * P * A);
    Eigen::MatrixXd next = Q + A.transpose() * P * (A - B * K);
    next = 0.5 * (next + next.transpose()).eval();
    if (!next.allFinite()) break;
    const double change = (next - P).cwiseAbs().maxCoeff();
    P = std::move(next);
    if (change <= opt.tolerance * std::max(1.0, P.cwiseAbs().maxCoeff())) return P;
  }
  throw NumericError("Riccati iteration did not converge");
}

/// Infinite-horizon LQR gain: u = -K x.
inline Eigen::MatrixXd lqr_gain(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, const Eigen::MatrixXd& Q,
                                const Eigen::MatrixXd& R, RiccatiOptions opt = {}) {
  const Eigen::MatrixXd P = dare(A, B, Q, R, opt);
  return (R + B.transpose() * P * B).ldlt().solve(B.transpose() * P * A);
}

/// Reference states sampled along a chain of segments.
struct Reference {
  std::vector<Eigen::Vector3d> states;
  std::vector<double> turn_rates;  // Dubins only: feed-forward turn rate per step
};

/// Linear plant: points no more than `spacing` apart, including every segment end.
inline Reference linear_reference(const std::vector<Segment>& path, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("reference spacing must be > 0");
  Reference r;
  for (const auto& s : path) {
    const int k = std::max(1, static_cast<int>(std::ceil(s.length() / spacing - 1e-12)));
    for (int i = r.states.empty() ? 0 : 1; i <= k; ++i) {
      const Pose2 p = s.at(static_cast<double>(i) / k);
      r.states.emplace_back(p.x, p.y, 0.0);
    }
  }
  return r;
}

/// Dubins plant: about one state per time step at speed v, with the
/// feed-forward turn rate v * curvature for each transition.
inline Reference dubins_reference(const std::vector<Segment>& path, const DubinsPlant& plant) {
  Reference r;
  const double ds = plant.v * plant.tau;
  for (const auto& s : path) {
    const double len = s.length();
    const int k = std::max(1, static_cast<int>(std::round(len / ds)));
    const DubinsPath* dp = std::get_if<DubinsPath>(&s.curve);
    for (int i = r.states.empty() ? 0 : 1; i <= k; ++i) {
      const Pose2 p = s.at(static_cast<double>(i) / k);
      r.states.emplace_back(p.x, p.y, p.theta);
    }
    for (int i = 0; i < k; ++i) {
      double curvature = 0.0;
      if (dp) {
        const double mid = (i + 0.5) / k;
        // Driving a curve backwards swaps left and right turns.
        curvature = s.reversed ? -dp->curvature((1.0 - mid) * len) : dp->curvature(mid * len);
      }
      r.turn_rates.push_back(plant.v * curvature);
    }
  }
  r.turn_rates.push_back(0.0);
  return r;
}

/// Finite-horizon LQR gains along a Dubins reference (one backward Riccati pass).
inline std::vector<Eigen::Matrix<double, 1, 3>> dubins_gains(const Reference& ref, const DubinsPlant& p,
                                                             const Eigen::Matrix3d& Q, double R) {
  const std::size_t T = ref.states.size();
  std::vector<Eigen::Matrix<double, 1, 3>> K(T, Eigen::Matrix<double, 1, 3>::Zero());
  Eigen::Matrix3d P = Q;
  for (std::size_t i = T; i-- > 0;) {
    const double w = ref.turn_rates[i];
    const Eigen::Matrix3d A = p.jacobian_state(ref.states[i], w);
    const Eigen::Vector3d B = p.jacobian_input(ref.states[i], w).col(1);
    const double s = R + B.dot(P * B);
    K[i] = (B.transpose() * P * A) / s;
    P = Q + A.transpose() * P * (A - B * K[i]);
    P = 0.5 * (P + P.transpose()).eval();
  }
  return K;
}

// ---------------------------------------------------------------------------
// Rollouts

enum class Outcome { Success, Collision, Timeout };

inline const char* to_string(Outcome o) {
  switch (o) {
    case Outcome::Success: return "success";
    case Outcome::Collision: return "collision";
    case Outcome::Timeout: return "timeout";
  }
  return "?";
}

struct Rollout {
  std::vector<Eigen::Vector3d> states;
  std::vector<Eigen::Vector3d> estimates;
  std::vector<Eigen::VectorXd> controls;
  std::vector<double> distances;
  double min_distance{std::numeric_limits<double>::infinity()};
  Outcome outcome{Outcome::Timeout};
  int steps{0};
};

struct GoalRegion {
  Eigen::Vector3d goal{0.0, 0.0, 0.0};
  double radius{0.5};
  /// Heading tolerance; infinite ignores heading.
  double heading_tolerance{std::numeric_limits<double>::infinity()};

  bool contains(const Eigen::Vector3d& x) const {
    if ((x.head<2>() - goal.head<2>()).norm() > radius) return false;
    return std::isinf(heading_tolerance) || std::abs(wrap_angle(x(2) - goal(2))) <= heading_tolerance;
  }
};

struct TrackOptions {
  double step_limit_factor{4.0};
  bool record{true};
};

/// Distance-to-collision of the robot at a true state.
using DistanceFn = std::function<double(const Eigen::Vector3d&)>;

namespace detail {
inline bool observe_step(Rollout& r, const Eigen::Vector3d& x, const Eigen::Vector3d& xhat,
                         const Eigen::VectorXd& u, const DistanceFn& dist, const GoalRegion& goal, bool record) {
  const double d = dist(x);
  r.min_distance = std::min(r.min_distance, d);
  ++r.steps;
  if (record) {
    r.states.push_back(x);
    r.estimates.push_back(xhat);
    r.controls.push_back(u);
    r.distances.push_back(d);
  }
  if (d <= 0.0) {
    r.outcome = Outcome::Collision;
    return true;
  }
  if (goal.contains(x)) {
    r.outcome = Outcome::Success;
    return true;
  }
  return false;
}
}  // namespace detail

/**
 * @brief LQR tracking of a linear-plant reference with a Kalman filter.
 * u = (r_{i+1} - r_i) - K (xhat - r_i), clipped to u_max.
 */
inline Rollout track_linear(const Reference& ref, const LinearPlant& plant, const Eigen::Matrix2d& K,
                            const GoalRegion& goal, const DistanceFn& dist, Rng& rng, TrackOptions opt = {}) {
  if (ref.states.empty()) throw std::invalid_argument("empty reference");
  Rollout r;
  const int T = static_cast<int>(ref.states.size()) - 1;
  const int limit = std::max(1, static_cast<int>(std::ceil(opt.step_limit_factor * std::max(T, 1))));
  Eigen::Vector2d x = ref.states.front().head<2>();
  Estimate est{x, plant.N};
  const double d0 = dist(Eigen::Vector3d(x(0), x(1), 0.0));
  r.min_distance = d0;
  if (d0 <= 0.0) {
    r.outcome = Outcome::Collision;
    return r;
  }
  for (int step = 0; step < limit; ++step) {
    const int i = std::min(step, T);
    const Eigen::Vector2d ri = ref.states[static_cast<std::size_t>(i)].head<2>();
    const Eigen::Vector2d rn = ref.states[static_cast<std::size_t>(std::min(i + 1, T))].head<2>();
    Eigen::Vector2d u = (rn - ri) - K * (est.x - ri);
    if (u.norm() > plant.u_max) u *= plant.u_max / u.norm();
    const auto s = plant.step(x, u, rng);
    x = s.x;
    est = kalman_step(est, plant, u, s.z);
    if (detail::observe_step(r, Eigen::Vector3d(x(0), x(1), 0.0), Eigen::Vector3d(est.x(0), est.x(1), 0.0), u,
                             dist, goal, opt.record))
      return r;
  }
  r.outcome = Outcome::Timeout;
  return r;
}

/**
 * @brief Time-varying LQG tracking of a Dubins reference with an EKF.
 *
 * The reference index follows the estimate's projection onto the reference,
 * so along-track lag from speed noise is not fed back as steering error.
 * Past the end the reference continues straight ahead.
 */
inline Rollout track_dubins(const Reference& ref, const DubinsPlant& plant,
                            const std::vector<Eigen::Matrix<double, 1, 3>>& gains, const GoalRegion& goal,
                            const DistanceFn& dist, Rng& rng, TrackOptions opt = {}) {
  if (ref.states.empty() || gains.size() != ref.states.size())
    throw std::invalid_argument("reference and gain schedule differ");
  Rollout r;
  const int T = static_cast<int>(ref.states.size()) - 1;
  const int limit = std::max(1, static_cast<int>(std::ceil(opt.step_limit_factor * std::max(T, 1))));
  Eigen::Vector3d x = ref.states.front();
  Estimate est{x, plant.N};
  r.min_distance = dist(x);
  if (r.min_distance <= 0.0) {
    r.outcome = Outcome::Collision;
    return r;
  }
  const double ds = plant.v * plant.tau;
  auto reference_at = [&](int i) -> Eigen::Vector3d {
    if (i <= T) return ref.states[static_cast<std::size_t>(i)];
    const Eigen::Vector3d& e = ref.states.back();
    const double s = (i - T) * ds;
    return {e(0) + s * std::cos(e(2)), e(1) + s * std::sin(e(2)), e(2)};
  };
  int idx = 0;
  for (int step = 0; step < limit; ++step) {
    // Advance to the closest reference point ahead of the current index.
    double best = (est.x.head<2>() - reference_at(idx).head<2>()).squaredNorm();
    for (int j = idx + 1; j <= idx + 20; ++j) {
      const double dj = (est.x.head<2>() - reference_at(j).head<2>()).squaredNorm();
      if (dj < best) {
        best = dj;
        idx = j;
      }
    }
    const Eigen::Vector3d rr = reference_at(idx);
    Eigen::Vector3d e = est.x - rr;
    e(2) = wrap_angle(e(2));
    const auto& Ki = gains[static_cast<std::size_t>(std::min(idx, T))];
    const double w_ff = idx < T ? ref.turn_rates[static_cast<std::size_t>(idx)] : 0.0;
    const double w = w_ff - Ki.dot(e);
    x = plant.step(x, w, rng);
    est = ekf_step(est, plant, w, plant.observe(x, rng));
    Eigen::VectorXd u(1);
    u(0) = w;
    if (detail::observe_step(r, x, est.x, u, dist, goal, opt.record)) return r;
  }
  r.outcome = Outcome::Timeout;
  return r;
}

}  // namespace ccgp
