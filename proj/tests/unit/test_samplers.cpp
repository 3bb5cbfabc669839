#include <cmath>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vpfb/data.hpp"
#include "vpfb/samplers.hpp"

using namespace vpfb;

namespace {

struct ZeroPotential {
  Vector energy(const Matrix& X, double) const { return Vector::Zero(X.rows()); }
  Matrix grad(const Matrix& X, double) const { return Matrix::Zero(X.rows(), X.cols()); }
};

double flow_error(OdeMethod method, int steps) {
  const Matrix x0 = prior_sample(2, 16, 1.0, 3);
  OdeConfig cfg;
  cfg.method = method;
  cfg.horizon = 1.0;
  cfg.steps = steps;
  const Matrix x = flow_sample(oracle::QuadraticPotential{}, x0, cfg).samples;
  return (x - oracle::QuadraticPotential::exact(x0, 1.0)).cwiseAbs().maxCoeff();
}

}  // namespace

TEST(Ode, ObservedOrders) {
  for (auto [method, order] : {std::pair{OdeMethod::euler, 1.0}, std::pair{OdeMethod::rk4, 4.0}}) {
    const std::vector<double> p =
        oracle::observed_orders({flow_error(method, 10), flow_error(method, 20), flow_error(method, 40)});
    for (double q : p) EXPECT_NEAR(q, order, 0.5) << to_string(method);
  }
}

TEST(Ode, AdaptiveMeetsTolerance) {
  const Matrix x0 = prior_sample(2, 16, 1.0, 4);
  OdeConfig cfg;
  cfg.horizon = 1.0;
  cfg.rtol = 1e-8;
  cfg.atol = 1e-10;
  const FlowResult r = flow_sample(oracle::QuadraticPotential{}, x0, cfg);
  EXPECT_LT((r.samples - oracle::QuadraticPotential::exact(x0, 1.0)).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_GT(r.accepted_steps, 0);
}

TEST(Ode, ZeroFieldLeavesPointsAndRecordsTrajectory) {
  const Matrix x0 = prior_sample(2, 5, 1.0, 5);
  OdeConfig cfg;
  cfg.method = OdeMethod::rk4;
  cfg.steps = 8;
  cfg.record_trajectory = true;
  const FlowResult r = flow_sample(ZeroPotential{}, x0, cfg);
  EXPECT_EQ((r.samples - x0).norm(), 0.0);
  EXPECT_EQ(r.trajectory.size(), 9u);
  EXPECT_EQ(r.times.size(), 9u);
  EXPECT_DOUBLE_EQ(r.times.back(), cfg.horizon);
}

TEST(Ode, InvalidConfigRejected) {
  OdeConfig cfg;
  cfg.horizon = 0.0;
  EXPECT_THROW(flow_sample(ZeroPotential{}, Matrix::Zero(1, 2), cfg), ConfigError);
}

TEST(Boltzmann, ZeroPotentialGivesQuadraticBowl) {
  ScheduleParams p;
  p.t_max = 0.5;
  const BoltzmannEnergy e(ZeroPotential{}, p);
  Matrix x(1, 2);
  x << 1.0, 0.0;
  EXPECT_NEAR(e.energy(x)[0], -1.0, 1e-10);
  EXPECT_NEAR(e.grad(x)(0, 0), -2.0, 1e-10);
  EXPECT_NEAR(e.energy(Matrix::Zero(1, 2))[0], 0.0, 1e-15);
}

TEST(Boltzmann, GradientMatchesFiniteDifferences) {
  ScheduleParams p;
  p.t_max = 0.9;
  const BoltzmannEnergy e(oracle::QuadraticPotential{}, p);
  Matrix x(1, 2);
  x << 0.3, -0.7;
  const double h = 1e-6;
  for (int j = 0; j < 2; ++j) {
    Matrix a = x, b = x;
    a(0, j) += h;
    b(0, j) -= h;
    EXPECT_NEAR(e.grad(x)(0, j), (e.energy(a)[0] - e.energy(b)[0]) / (2 * h), 1e-6);
  }
}

TEST(Sgld, OrnsteinUhlenbeckStationaryMoments) {
  SgldConfig cfg;
  cfg.step_size = 0.1;
  cfg.lambda = 0.5;
  cfg.steps = 400;
  cfg.seed = 9;
  const SgldResult r = sgld_sample(oracle::OuEnergy{}, Matrix::Zero(20000, 2), cfg);
  const double var = oracle::OuEnergy::stationary_variance(cfg.lambda, cfg.step_size);
  const Eigen::Index N = r.samples.size();
  const double mean = r.samples.mean();
  const double emp = (r.samples.array() - mean).square().sum() / static_cast<double>(N - 1);
  EXPECT_NEAR(mean, 0.0, 4.0 * std::sqrt(var / static_cast<double>(N)));
  EXPECT_NEAR(emp / var, 1.0, 0.03);
}

TEST(Sgld, SeededAndPerChainIndependent) {
  SgldConfig cfg;
  cfg.step_size = 0.05;
  cfg.steps = 10;
  cfg.seed = 1;
  const Matrix init = Matrix::Zero(4, 2);
  const SgldResult a = sgld_sample(oracle::OuEnergy{}, init, cfg), b = sgld_sample(oracle::OuEnergy{}, init, cfg);
  EXPECT_EQ(a.samples, b.samples);
  // The first chain does not depend on how many chains run beside it.
  const SgldResult c = sgld_sample(oracle::OuEnergy{}, Matrix::Zero(1, 2), cfg);
  EXPECT_EQ(Matrix(a.samples.topRows(1)), c.samples);
  EXPECT_EQ(a.grad_norm_mean.size(), 10u);
}

TEST(Sgld, DivergenceIsReported) {
  struct Repulsive {
    Vector energy(const Matrix& X) const { return X.rowwise().squaredNorm(); }
    Matrix grad(const Matrix& X) const { return 2.0 * X; }
  };
  SgldConfig cfg;
  cfg.step_size = 1.0;
  cfg.steps = 100;
  EXPECT_THROW(sgld_sample(Repulsive{}, Matrix::Ones(2, 2), cfg), NumericError);
}
