#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vpfb/autodiff.hpp"
#include "vpfb/energy_model.hpp"

using namespace vpfb;
namespace ad = vpfb::ad;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8}); }

}  // namespace

TEST(Autodiff, ActivationDerivativesMatchFiniteDifferences) {
  const double h = 1e-5;
  for (auto act : {ad::Activation::tanh, ad::Activation::softplus, ad::Activation::silu, ad::Activation::gelu,
                   ad::Activation::sin}) {
    for (int order = 0; order < ad::kMaxActivationOrder; ++order) {
      for (double z : {-2.1, -0.3, 0.0, 0.7, 1.9}) {
        const double fd = (ad::activation_derivative(act, order, z + h) - ad::activation_derivative(act, order, z - h)) /
                          (2 * h);
        EXPECT_NEAR(ad::activation_derivative(act, order + 1, z), fd, 1e-7) << ad::to_string(act) << " " << order;
      }
    }
  }
}

TEST(Autodiff, SquareAtThree) {
  ad::Tape tape;
  ad::Var x = tape.variable(Matrix::Constant(1, 1, 3.0));
  ad::Var y = x * x;
  ad::Var g = tape.grad(y, {x}, true)[0];
  EXPECT_DOUBLE_EQ(g.scalar(), 6.0);
  EXPECT_DOUBLE_EQ(tape.grad(g, {x})[0].scalar(), 2.0);
}

TEST(Autodiff, ReciprocalOfZeroIsZero) {
  ad::Tape tape;
  ad::Var x = tape.variable(Matrix::Zero(1, 1));
  EXPECT_EQ(ad::reciprocal(x).scalar(), 0.0);
}

TEST(Autodiff, EveryOpFirstOrder) {
  std::mt19937_64 rng(7);
  const Matrix A0 = random_matrix(3, 4, rng), B0 = random_matrix(4, 2, rng), C0 = random_matrix(3, 4, rng);
  auto build = [&](ad::Tape& tape, ad::Var a) {
    ad::Var b = tape.constant(B0);
    ad::Var c = tape.constant(C0);
    ad::Var h = ad::activation(ad::matmul(a, b), ad::Activation::gelu);
    ad::Var k = ad::concat_cols(h, ad::slice_cols(a * c + 0.5, 1, 2));
    ad::Var r = ad::sqrt(ad::sum_cols(k * k) + 1.0);
    ad::Var s = ad::reciprocal(r + 2.0) - 0.1 * ad::broadcast_rows(ad::sum_rows(r), 3);
    ad::Var p = ad::pad_cols(ad::transpose(ad::transpose(s)), 1, 3);
    return ad::sum(ad::broadcast_cols(ad::sum_cols(p), 2) * tape.constant(Matrix::Constant(3, 2, 0.3))) +
           ad::mean(ad::activation(a, ad::Activation::tanh)) - ad::sum(0.01 * -a);
  };
  auto f = [&](const oracle::Vec& v) {
    ad::Tape tape;
    return build(tape, tape.constant(Eigen::Map<const Matrix>(v.data(), 3, 4))).scalar();
  };
  ad::Tape tape;
  ad::Var a = tape.variable(A0);
  const Matrix g = tape.grad(build(tape, a), {a})[0].value();
  const oracle::Vec p = Eigen::Map<const oracle::Vec>(A0.data(), A0.size());
  const oracle::Vec fd = oracle::gradient_fd(f, p, 1e-6);
  for (Eigen::Index i = 0; i < fd.size(); ++i) EXPECT_LT(rel(g.data()[i], fd[i]), 1e-6) << i;
}

TEST(Autodiff, HessianVectorThroughGradient) {
  // Second derivatives: d/dA of sum(grad_x phi) for a two-layer net.
  std::mt19937_64 rng(8);
  const Matrix X0 = random_matrix(4, 2, rng), W1 = random_matrix(2, 5, rng), W2 = random_matrix(5, 1, rng);
  for (auto act : {ad::Activation::tanh, ad::Activation::softplus, ad::Activation::silu, ad::Activation::gelu,
                   ad::Activation::sin}) {
    auto loss = [&](ad::Tape& tape, ad::Var w1) {
      ad::Var x = tape.variable(X0);
      ad::Var phi = ad::matmul(ad::activation(ad::matmul(x, w1), act), tape.constant(W2));
      ad::Var gx = tape.grad(ad::sum(phi), {x}, true)[0];
      return ad::mean(ad::sum_cols(gx * gx));
    };
    auto f = [&](const oracle::Vec& v) {
      ad::Tape tape;
      return loss(tape, tape.constant(Eigen::Map<const Matrix>(v.data(), 2, 5))).scalar();
    };
    ad::Tape tape;
    ad::Var w1 = tape.variable(W1);
    const Matrix g = tape.grad(loss(tape, w1), {w1})[0].value();
    const oracle::Vec fd = oracle::gradient_fd(f, Eigen::Map<const oracle::Vec>(W1.data(), W1.size()), 1e-5);
    for (Eigen::Index i = 0; i < fd.size(); ++i) EXPECT_LT(rel(g.data()[i], fd[i]), 1e-4) << ad::to_string(act);
  }
}

TEST(Autodiff, ParamGradIsLinear) {
  Architecture arch;
  arch.hidden = {8, 8};
  const EnergyModel m(arch, 3);
  std::mt19937_64 rng(9);
  const Matrix X = random_matrix(6, 2, rng);
  const Vector T = Vector::LinSpaced(6, 0.1, 0.9);
  auto grad_of = [&](double a, double b) {
    return m.param_grad([&](ad::Tape& tape, const BoundParams& bp) {
      const FieldEvaluation f = m.field(tape, bp, X, T, {}, true);
      ad::Var l1 = ad::mean(f.phi * f.phi);
      ad::Var l2 = ad::mean(ad::sum_cols(f.grad_x * f.grad_x));
      return a * l1 + b * l2;
    }).second;
  };
  const Vector g1 = grad_of(1, 0), g2 = grad_of(0, 1), g = grad_of(2.5, -1.5);
  EXPECT_LT((g - (2.5 * g1 - 1.5 * g2)).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, g.cwiseAbs().maxCoeff()));
}

TEST(Autodiff, InputGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> width(3, 12), depth(1, 3), pick(0, 4);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    Architecture arch;
    arch.hidden.assign(static_cast<std::size_t>(depth(rng)), width(rng));
    arch.activation = static_cast<ad::Activation>(pick(rng));
    arch.time_embedding = trial % 2 ? TimeEmbedding::sinusoidal : TimeEmbedding::raw;
    const EnergyModel m(arch, static_cast<std::uint64_t>(trial));
    Vector x = random_matrix(2, 1, rng).col(0);
    const double t = unif(rng);
    const auto [gx, gt] = m.input_grad(x.transpose(), Vector::Constant(1, t));
    const double h = 1e-6;
    for (int j = 0; j < 2; ++j) {
      Vector a = x, b = x;
      a[j] += h;
      b[j] -= h;
      const double fd = (m.energy(a, t) - m.energy(b, t)) / (2 * h);
      EXPECT_LT(std::abs(gx(0, j) - fd), 1e-6 * std::max(1.0, std::abs(fd))) << trial;
    }
    const double fdt = (m.energy(x, t + h) - m.energy(x, t - h)) / (2 * h);
    EXPECT_LT(std::abs(gt[0] - fdt), 1e-6 * std::max(1.0, std::abs(fdt))) << trial;
  }
}

TEST(Autodiff, ShapeMismatchRejected) {
  ad::Tape tape;
  ad::Var a = tape.variable(Matrix::Zero(2, 3));
  ad::Var b = tape.variable(Matrix::Zero(2, 2));
  EXPECT_THROW(a + b, ConfigError);
  EXPECT_THROW(ad::matmul(a, a), ConfigError);
}

TEST(EnergyModel, ClassConditionalUsesLabels) {
  Architecture arch;
  arch.hidden = {8};
  arch.num_classes = 2;
  const EnergyModel m(arch, 4);
  Vector x(2);
  x << 0.3, 0.1;
  EXPECT_NE(m.energy(x, 0.5, 0), m.energy(x, 0.5, 1));
  EXPECT_THROW(m.energy(x, 0.5, 2), ConfigError);
  EXPECT_THROW(m.energy(x, 0.5), ConfigError);
}

TEST(EnergyModel, ParameterCountAndSeeding) {
  Architecture arch;
  arch.hidden = {4, 3};
  EXPECT_EQ(arch.param_count(), (3 * 4 + 4) + (4 * 3 + 3) + (3 * 1 + 1));
  EXPECT_EQ(EnergyModel(arch, 5).params(), EnergyModel(arch, 5).params());
  EXPECT_NE(EnergyModel(arch, 5).params(), EnergyModel(arch, 6).params());
  EXPECT_THROW(EnergyModel(arch, Vector::Zero(3)), ConfigError);
}
