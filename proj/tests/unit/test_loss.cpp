#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vpfb/loss.hpp"

using namespace vpfb;

namespace {

PerturbedBatch random_batch(Eigen::Index B, std::uint64_t seed, bool shared_time = false) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  Matrix xb(B, 2), eps(B, 2);
  Vector t(B);
  const double t0 = unif(rng);
  for (Eigen::Index i = 0; i < B; ++i) {
    xb.row(i) << normal(rng), normal(rng);
    eps.row(i) << normal(rng), normal(rng);
    t[i] = shared_time ? t0 : unif(rng);
  }
  return perturb_batch(xb, eps, t, ScheduleParams{});
}

EnergyModel small_model(std::uint64_t seed, ad::Activation act = ad::Activation::tanh) {
  Architecture arch;
  arch.hidden = {6, 5};
  arch.activation = act;
  return EnergyModel(arch, seed);
}

}  // namespace

TEST(Loss, FullLossGradientMatchesDirectionalDifferences) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  for (int trial = 0; trial < 5; ++trial) {
    const EnergyModel m = small_model(static_cast<std::uint64_t>(trial), static_cast<ad::Activation>(trial % 5));
    const PerturbedBatch batch = random_batch(7, 100 + static_cast<std::uint64_t>(trial));
    for (char preset : {'A', 'D', 'E'}) {
      const LossConfig cfg = LossConfig::preset(preset);
      const auto [value, grad] = loss_and_grad(m, batch, cfg);
      auto f = [&](const oracle::Vec& p) { return batch_loss(EnergyModel(m.arch(), p), batch, cfg).total; };
      for (int k = 0; k < 4; ++k) {
        oracle::Vec d(grad.size());
        for (auto& v : d) v = normal(rng);
        d.normalize();
        const double fd = oracle::directional_fd(f, m.params(), d, 1e-5);
        EXPECT_NEAR(grad.dot(d), fd, 1e-4 * std::max(1.0, std::abs(fd))) << preset;
      }
    }
  }
}

TEST(Loss, CovarianceIsShiftInvariant) {
  const EnergyModel m = small_model(2);
  const PerturbedBatch batch = random_batch(16, 3);
  Vector shifted = m.params();
  shifted[shifted.size() - 1] += 3.7;  // output bias shifts Phi by a constant
  const EnergyModel m2(m.arch(), shifted);
  LossConfig cfg;
  cfg.use_poincare = false;
  const LossBreakdown a = batch_loss(m, batch, cfg), b = batch_loss(m2, batch, cfg);
  EXPECT_NEAR(a.covariance_term, b.covariance_term, 1e-10);
  EXPECT_NEAR(a.total, b.total, 1e-10);
}

TEST(Loss, CovarianceMatchesSampleFormula) {
  ad::Tape tape;
  Vector a(4), b(4);
  a << 1, 2, 3, 5;
  b << 2, 0, 1, 4;
  const double expected = ((a.array() - a.mean()) * (b.array() - b.mean())).sum() / 3.0;
  EXPECT_NEAR(detail::covariance(tape, tape.constant(Matrix(a)), b, std::nullopt).scalar(), expected, 1e-14);
}

TEST(Loss, BreakdownSumsToTotal) {
  const EnergyModel m = small_model(4);
  const LossBreakdown l = batch_loss(m, random_batch(12, 5), LossConfig{});
  EXPECT_NEAR(l.total, l.covariance_term + l.alignment_term + l.grad_norm_term + l.time_grad_term + l.poincare_term,
              1e-12);
  EXPECT_LE(l.alignment_term, 1.0);
  EXPECT_GE(l.alignment_term, -1.0);
  EXPECT_GE(l.grad_norm_term, 0.0);
}

TEST(Loss, PresetsSwitchTerms) {
  const EnergyModel m = small_model(5);
  const PerturbedBatch batch = random_batch(12, 6);
  EXPECT_EQ(batch_loss(m, batch, LossConfig::preset('B')).covariance_term, 0.0);
  EXPECT_EQ(batch_loss(m, batch, LossConfig::preset('C')).alignment_term, 0.0);
  const LossBreakdown e = batch_loss(m, batch, LossConfig::preset('E'));
  EXPECT_EQ(e.covariance_term, 0.0);
  EXPECT_EQ(e.alignment_term, 0.0);
  EXPECT_NEAR(e.total, flow_matching_loss(m, batch), 1e-12);
  EXPECT_THROW(LossConfig::preset('F'), ConfigError);
}

TEST(Loss, FlowMatchingIsMeanSquaredResidual) {
  const EnergyModel m = small_model(6);
  const PerturbedBatch batch = random_batch(9, 7);
  const Matrix g = m.grad_x(batch.x, batch.t);
  EXPECT_NEAR(flow_matching_loss(m, batch), (g - batch.v_cond).rowwise().squaredNorm().mean(), 1e-12);
}

TEST(Loss, CosineTermBoundedForZeroGradient) {
  Architecture arch;
  arch.hidden = {4};
  const EnergyModel m(arch, Vector::Zero(arch.param_count()));
  const LossBreakdown l = batch_loss(m, random_batch(8, 8), LossConfig{});
  EXPECT_TRUE(l.finite());
  EXPECT_EQ(l.alignment_term, 0.0);
}

TEST(Loss, SingletonBatchRejected) {
  const EnergyModel m = small_model(7);
  EXPECT_THROW(batch_loss(m, random_batch(1, 9), LossConfig{}), ConfigError);
}

TEST(Loss, RitzCoreNeedsSharedTime) {
  const EnergyModel m = small_model(8);
  EXPECT_THROW(ritz_core_loss(m, random_batch(8, 10), ScheduleParams{}), ConfigError);
  EXPECT_TRUE(std::isfinite(ritz_core_loss(m, random_batch(8, 10, true), ScheduleParams{})));
}

TEST(Loss, WeightedInnovationUsesDecay) {
  const PerturbedBatch batch = random_batch(5, 11);
  LossConfig cfg;
  cfg.kappa = 2.0;
  const Vector c = weighted_innovation(batch, cfg);
  for (Eigen::Index i = 0; i < 5; ++i) {
    EXPECT_NEAR(c[i], std::pow(1 - batch.t[i], 2.0) * (batch.gamma[i] - batch.gamma_bar[i]), 1e-12);
  }
}
