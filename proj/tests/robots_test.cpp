#include "ccgp/robots.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include <cmath>

using namespace ccgp;

namespace {

LinearPlant silent_linear() {
  LinearPlant p;
  p.M.setZero();
  p.N.setZero();
  return p;
}

DubinsPlant silent_dubins() {
  DubinsPlant p;
  p.sigma_v = p.sigma_w = p.sigma_rot = 0.0;
  p.N.setZero();
  p.N.diagonal().setConstant(1e-18);
  return p;
}

DistanceFn far_away() {
  return [](const Eigen::Vector3d&) { return 100.0; };
}

}  // namespace

TEST(LinearPlant, NoiseFreeStep) {
  Rng rng(1);
  const auto s = silent_linear().step({0, 0}, {1, 0}, rng);
  EXPECT_EQ(s.x, Eigen::Vector2d(1, 0));
  EXPECT_EQ(s.z, Eigen::Vector2d(1, 0));
}

TEST(LinearPlant, SeededSequenceIsPinned) {
  Rng rng(42);
  LinearPlant p;
  Eigen::Vector2d x(0, 0);
  for (int i = 0; i < 3; ++i) x = p.step(x, {0.5, 0}, rng).x;
  Rng again(42);
  Eigen::Vector2d y(0, 0);
  for (int i = 0; i < 3; ++i) y = p.step(y, {0.5, 0}, again).x;
  EXPECT_EQ(x, y);
  EXPECT_NEAR(x(0), 1.1247374761659676, 1e-12);
  EXPECT_NEAR(x(1), 0.66520623108556021, 1e-12);
}

TEST(LinearPlant, IncrementCovariance) {
  Rng rng(3);
  LinearPlant p;
  Eigen::Vector2d x(0, 0);
  Eigen::Matrix2d S = Eigen::Matrix2d::Zero();
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector2d next = p.step(x, {0, 0}, rng).x;
    S += (next - x) * (next - x).transpose();
    x = next;
  }
  S /= n;
  EXPECT_NEAR(S(0, 0), 0.1, 0.01);
  EXPECT_NEAR(S(1, 1), 0.1, 0.01);
  EXPECT_NEAR(S(0, 1), 0.0, 0.01);
}

TEST(DubinsPlant, StraightLimit) {
  Rng rng(1);
  const auto p = silent_dubins();
  for (double w : {0.0, 1e-9, -1e-7}) {
    const Eigen::Vector3d x = p.step({0, 0, 0}, w, rng);
    EXPECT_NEAR(x(0), p.v * p.tau, 1e-12);
    EXPECT_NEAR(x(1), 0.0, 1e-12);
    EXPECT_NEAR(x(2), 0.0, 1e-12);
  }
}

TEST(DubinsPlant, FullCircleReturns) {
  Rng rng(1);
  const auto p = silent_dubins();
  const int steps = 100;
  const double w = 2 * std::numbers::pi / (steps * p.tau);
  Eigen::Vector3d x(1, 2, 0.3);
  for (int i = 0; i < steps; ++i) x = p.step(x, w, rng);
  EXPECT_NEAR(x(0), 1.0, 1e-6);
  EXPECT_NEAR(x(1), 2.0, 1e-6);
  EXPECT_NEAR(wrap_angle(x(2) - 0.3), 0.0, 1e-6);
}

TEST(DubinsPlant, SeededSequenceIsPinned) {
  Rng rng(42);
  DubinsPlant p;
  Eigen::Vector3d x(0, 0, 0);
  for (int i = 0; i < 3; ++i) x = p.step(x, 0.5, rng);
  EXPECT_NEAR(x(0), 0.28790551708485829, 1e-12);
  EXPECT_NEAR(x(1), 0.010314111610099711, 1e-12);
  EXPECT_NEAR(x(2), 0.14917407602165111, 1e-12);
}

TEST(DubinsPlant, JacobiansMatchFiniteDifferences) {
  DubinsPlant p;
  for (double w : {0.0, 0.7, -1.3}) {
    const Eigen::Vector3d x(0.3, -0.2, 1.1);
    const Eigen::Matrix3d F = p.jacobian_state(x, w);
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d h = Eigen::Vector3d::Zero();
      h(j) = 1e-6;
      const Eigen::Vector3d fd = (p.move(x + h, p.v, w) - p.move(x - h, p.v, w)) / 2e-6;
      EXPECT_LT((F.col(j) - fd).norm(), 1e-7) << w << " " << j;
    }
    const auto V = p.jacobian_input(x, w);
    const Eigen::Vector3d dv = (p.move(x, p.v + 1e-6, w) - p.move(x, p.v - 1e-6, w)) / 2e-6;
    EXPECT_LT((V.col(0) - dv).norm(), 1e-7);
    if (w != 0.0) {
      const Eigen::Vector3d dw = (p.move(x, p.v, w + 1e-6) - p.move(x, p.v, w - 1e-6)) / 2e-6;
      EXPECT_LT((V.col(1) - dw).norm(), 1e-7);
    }
  }
}

TEST(Kalman, NoProcessNoiseShrinksToZero) {
  LinearPlant p;
  p.M.setZero();
  Estimate e{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
  double prev = e.P.trace();
  for (int i = 0; i < 1000; ++i) {
    e = kalman_step(e, p, Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0));
    EXPECT_LT(e.P.trace(), prev);
    prev = e.P.trace();
  }
  EXPECT_LT(prev, 1e-4);
}

TEST(Kalman, NoNoiseAtAllIsSingular) {
  const auto p = silent_linear();
  Estimate e{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
  e = kalman_step(e, p, Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0));
  EXPECT_EQ(e.P.norm(), 0.0);
  EXPECT_THROW(kalman_step(e, p, Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0)), NumericError);
}

TEST(Kalman, StationaryCovarianceClosedForm) {
  LinearPlant p;
  const double M = 0.1, N = 0.01;
  const double prior = (M + std::sqrt(M * M + 4 * M * N)) / 2;
  const double post = prior * N / (prior + N);
  Estimate e{Eigen::Vector2d(0, 0), Eigen::Matrix2d::Identity()};
  for (int i = 0; i < 200; ++i) e = kalman_step(e, p, Eigen::Vector2d(0, 0), Eigen::Vector2d(0, 0));
  EXPECT_NEAR(e.P(0, 0), post, 1e-8);
  EXPECT_NEAR(e.P(1, 1), post, 1e-8);
  EXPECT_NEAR(e.P(0, 1), 0.0, 1e-12);
}

TEST(Kalman, ZeroInnovationKeepsPrediction) {
  LinearPlant p;
  Estimate e{Eigen::Vector2d(1, 2), 0.5 * Eigen::Matrix2d::Identity()};
  const Eigen::Vector2d u(0.3, -0.1);
  const Estimate out = kalman_step(e, p, u, e.x + u);
  EXPECT_LT((out.x - (e.x + u)).norm(), 1e-15);
}

TEST(Kalman, EkfTracksNoiseFreeMotion) {
  const auto p = silent_dubins();
  Rng rng(2);
  Eigen::Vector3d x(0, 0, 0);
  Estimate e{Eigen::Vector3d(0.1, -0.1, 0.05), 0.1 * Eigen::Matrix3d::Identity()};
  for (int i = 0; i < 50; ++i) {
    x = p.step(x, 0.4, rng);
    e = ekf_step(e, p, 0.4, x);
  }
  EXPECT_LT((e.x - x).norm(), 1e-6);
}

TEST(Lqr, ScalarClosedForm) {
  Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  const double pstar = (1 + std::sqrt(5.0)) / 2;
  EXPECT_NEAR(dare(one, one, one, one)(0, 0), pstar, 1e-10);
  EXPECT_NEAR(lqr_gain(one, one, one, one)(0, 0), pstar / (1 + pstar), 1e-10);
}

TEST(Lqr, IdentitySystemStable) {
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd K = lqr_gain(I, I, I, I);
  // Fixed-point oracle: iterate the scalar recursion p <- 1 + p - p^2 / (1 + p).
  double pp = 1.0;
  for (int i = 0; i < 200; ++i) pp = 1 + pp - pp * pp / (1 + pp);
  EXPECT_NEAR(K(0, 0), pp / (1 + pp), 1e-10);
  EXPECT_NEAR(K(0, 1), 0.0, 1e-12);
  const Eigen::MatrixXd closed = I - K;
  EXPECT_LT(closed.eigenvalues().cwiseAbs().maxCoeff(), 1.0);
}

TEST(Lqr, ExpensiveControlGivesNoGain) {
  const Eigen::MatrixXd I = 0.5 * Eigen::MatrixXd::Identity(2, 2);
  const Eigen::MatrixXd K = lqr_gain(I, Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2),
                                     1e9 * Eigen::MatrixXd::Identity(2, 2));
  EXPECT_LT(K.norm(), 1e-8);
}

TEST(Lqr, UnstabilizableFails) {
  Eigen::MatrixXd A = 2 * Eigen::MatrixXd::Identity(1, 1), B = Eigen::MatrixXd::Zero(1, 1);
  const Eigen::MatrixXd one = Eigen::MatrixXd::Ones(1, 1);
  EXPECT_THROW(lqr_gain(A, B, one, one), NumericError);
}

TEST(Reference, LinearSpacing) {
  const std::vector<Segment> path{Segment::line({0, 0}, {2, 0}), Segment::line({2, 0}, {2, 1.5})};
  const auto r = linear_reference(path, 0.5);
  ASSERT_EQ(r.states.size(), 8u);
  for (std::size_t i = 1; i < r.states.size(); ++i)
    EXPECT_LE((r.states[i] - r.states[i - 1]).norm(), 0.5 + 1e-12);
  EXPECT_EQ(r.states.back().head<2>(), Eigen::Vector2d(2, 1.5));
}

TEST(Reference, DubinsFeedForwardFollowsPath) {
  const auto p = silent_dubins();
  const std::vector<Segment> path{Segment::dubins(dubins_shortest({0, 0, 0}, {3, 3, 1.57}, 1.0))};
  const auto r = dubins_reference(path, p);
  ASSERT_EQ(r.turn_rates.size(), r.states.size());
  // Open loop with the feed-forward turn rates stays close to the reference;
  // rounding each piece to whole steps leaves a few centimetres of drift.
  Rng rng(1);
  Eigen::Vector3d x = r.states.front();
  double worst = 0.0;
  for (std::size_t i = 0; i + 1 < r.states.size(); ++i) {
    x = p.step(x, r.turn_rates[i], rng);
    worst = std::max(worst, (x.head<2>() - r.states[i + 1].head<2>()).norm());
  }
  EXPECT_LT(worst, 0.1);
}

TEST(Track, LinearNoiseFreeReachesGoal) {
  auto p = silent_linear();
  p.N.diagonal().setConstant(1e-18);
  const auto ref = linear_reference({Segment::line({0, 0}, {5, 0})}, 0.5);
  const Eigen::Matrix2d K = lqr_gain(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2),
                                     Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2));
  Rng rng(1);
  const auto r = track_linear(ref, p, K, {Eigen::Vector3d(5, 0, 0)}, far_away(), rng);
  EXPECT_EQ(r.outcome, Outcome::Success);
  EXPECT_EQ(r.min_distance, 100.0);
}

TEST(Track, CollisionStopsRollout) {
  LinearPlant p;
  const auto ref = linear_reference({Segment::line({0, 0}, {5, 0})}, 0.5);
  const Eigen::Matrix2d K = 0.5 * Eigen::Matrix2d::Identity();
  Rng rng(1);
  const auto r = track_linear(ref, p, K, {Eigen::Vector3d(5, 0, 0)},
                              [](const Eigen::Vector3d& x) { return 2.5 - x(0); }, rng);
  EXPECT_EQ(r.outcome, Outcome::Collision);
  EXPECT_LE(r.min_distance, 0.0);
  EXPECT_LE(r.distances.back(), 0.0);
}

TEST(Track, UnreachableGoalTimesOut) {
  auto p = silent_linear();
  p.N.diagonal().setConstant(1e-18);
  const auto ref = linear_reference({Segment::line({0, 0}, {5, 0})}, 0.5);
  Rng rng(1);
  const auto r = track_linear(ref, p, 0.5 * Eigen::Matrix2d::Identity(), {Eigen::Vector3d(50, 0, 0)},
                              far_away(), rng);
  EXPECT_EQ(r.outcome, Outcome::Timeout);
  EXPECT_EQ(r.steps, 40);
}

// Invariant: the covariance recursion does not depend on the measurements.
TEST(Invariant, CovarianceIndependentOfMeasurements) {
  LinearPlant p;
  auto trace = [&](unsigned seed) {
    Rng rng(seed);
    Estimate e{Eigen::Vector2d(0, 0), p.N};
    Eigen::Vector2d x(0, 0);
    std::vector<Eigen::MatrixXd> out;
    for (int i = 0; i < 50; ++i) {
      const auto s = p.step(x, {0.2, 0.1}, rng);
      x = s.x;
      e = kalman_step(e, p, Eigen::Vector2d(0.2, 0.1), s.z);
      out.push_back(e.P);
    }
    return out;
  };
  const auto a = trace(1), b = trace(2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE((a[i].array() == b[i].array()).all());
}

TEST(Invariant, LinearTrackingErrorDecays) {
  auto p = silent_linear();
  p.N.diagonal().setConstant(1e-18);
  const Eigen::Matrix2d K = lqr_gain(Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2),
                                     Eigen::MatrixXd::Identity(2, 2), Eigen::MatrixXd::Identity(2, 2));
  Reference ref = linear_reference({Segment::line({0, 0}, {20, 0})}, 0.5);
  // Start off the reference; the estimate is exact.
  ref.states.front() = Eigen::Vector3d(0, 1, 0);
  Rng rng(1);
  auto r = track_linear(ref, p, K, {Eigen::Vector3d(100, 0, 0)}, far_away(), rng);
  std::vector<double> err;
  for (const auto& x : r.states) err.push_back(std::abs(x(1)));
  for (std::size_t i = 1; i < err.size() && err[i - 1] > 1e-6; ++i) EXPECT_LT(err[i], err[i - 1]) << i;
  EXPECT_LT(err[30], 1e-6);
}

TEST(Invariant, DubinsTrackingErrorDecays) {
  const auto p = silent_dubins();
  Reference ref = dubins_reference({Segment::line({0, 0}, {30, 0})}, p);
  const auto gains = dubins_gains(ref, p, Eigen::Matrix3d::Identity(), 1.0);
  ref.states.front() = Eigen::Vector3d(0, 0.3, 0);
  Rng rng(1);
  const auto r = track_dubins(ref, p, gains, {Eigen::Vector3d(1000, 0, 0)}, far_away(), rng);
  std::vector<double> err;
  for (const auto& x : r.states) err.push_back(std::abs(x(1)) + std::abs(x(2)));
  // Geometric decay: the error shrinks by a fixed factor every 50 steps.
  for (std::size_t i = 50; i < 250; i += 50) EXPECT_LT(err[i], 0.5 * err[i - 50]) << i;
  EXPECT_LT(err[280], 1e-6);
}

TEST(Invariant, DubinsHeadingWrapped) {
  DubinsPlant p;
  Rng rng(9);
  Eigen::Vector3d x(0, 0, 3.1);
  for (int i = 0; i < 10000; ++i) {
    x = p.step(x, 2.0, rng);
    ASSERT_GT(x(2), -std::numbers::pi);
    ASSERT_LE(x(2), std::numbers::pi);
  }
}

TEST(Track, DubinsNoisyMostlyReachesGoal) {
  DubinsPlant p;
  const std::vector<Segment> path{Segment::dubins(dubins_shortest({0, 0, 0}, {6, 4, 1.0}, p.rho))};
  const auto ref = dubins_reference(path, p);
  const auto gains = dubins_gains(ref, p, Eigen::Matrix3d::Identity(), 1.0);
  GoalRegion goal{Eigen::Vector3d(6, 4, 1.0), 0.5, std::numbers::pi / 6};
  int ok = 0;
  for (int t = 0; t < 50; ++t) {
    Rng rng(100 + t);
    ok += track_dubins(ref, p, gains, goal, far_away(), rng).outcome == Outcome::Success;
  }
  EXPECT_GE(ok, 45);
}
