#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vpfb/eval.hpp"
#include "vpfb/samplers.hpp"

using namespace vpfb;

TEST(Auroc, HandBuiltCase) {
  EXPECT_DOUBLE_EQ(auroc({2, 3}, {1, 2.5}), 0.75);
  EXPECT_DOUBLE_EQ(auroc({5, 6}, {1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(auroc({1, 2, 3}, {1, 2, 3}), 0.5);
  EXPECT_THROW(auroc({}, {1}), ConfigError);
}

TEST(Auroc, MatchesPairCountingAndIgnoresMonotoneMaps) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal;
  std::vector<double> in(300), out(200);
  for (auto& v : in) v = std::round(4 * (normal(rng) + 0.7)) / 4;  // with ties
  for (auto& v : out) v = std::round(4 * normal(rng)) / 4;
  const double a = auroc(in, out);
  EXPECT_NEAR(a, oracle::auroc_pairs(in, out), 1e-12);
  auto map = [](std::vector<double> v, auto f) {
    for (auto& x : v) x = f(x);
    return v;
  };
  EXPECT_NEAR(auroc(map(in, [](double x) { return std::exp(x); }), map(out, [](double x) { return std::exp(x); })), a,
              1e-12);
  EXPECT_NEAR(auroc(map(in, [](double x) { return 3 * x - 2; }), map(out, [](double x) { return 3 * x - 2; })), a,
              1e-12);
}

TEST(Histogram, DegenerateCases) {
  const EnergyHistogram one = energy_histogram({1.5}, {1.5}, 10);
  int occupied = 0;
  for (double c : one.counts_a) occupied += c > 0;
  EXPECT_EQ(occupied, 1);
  EXPECT_NEAR(energy_histogram({1, 2, 3, 4}, {1, 2, 3, 4}, 5).intersection, 1.0, 1e-12);
  EXPECT_NEAR(energy_histogram({0, 0, 0}, {5, 5}, 8).intersection, 0.0, 1e-12);
  EXPECT_THROW(energy_histogram({1}, {1}, 0), ConfigError);
}

TEST(EnergyDistance, Basics) {
  const Matrix A = prior_sample(2, 50, 1.0, 1);
  EXPECT_NEAR(energy_distance(A, A), 0.0, 1e-12);
  Matrix p(1, 2), q(1, 2);
  p << 0, 0;
  q << 3, 4;
  EXPECT_NEAR(energy_distance(p, q), 10.0, 1e-12);
  const Matrix B = prior_sample(2, 40, 1.0, 2);
  EXPECT_NEAR(energy_distance(A, B), oracle::energy_distance(A, B), 1e-10);
}

TEST(EnergyDistance, ShrinksWithMeanShift) {
  const Matrix A = prior_sample(2, 800, 1.0, 3);
  const Matrix B = prior_sample(2, 800, 1.0, 4);
  double prev = std::numeric_limits<double>::infinity();
  for (double shift : {2.0, 1.0, 0.5}) {
    Matrix C = B;
    C.col(0).array() += shift;
    const double e = energy_distance(A, C);
    EXPECT_LT(e, prev);
    prev = e;
  }
}

TEST(Poincare, LinearPotential) {
  Matrix X(3, 2);
  X << 1, 0, 0, 2, 1, 1;
  Vector a(2);
  a << 0.5, -1.0;
  const Vector phi = X * a;
  const Matrix g = a.transpose().replicate(3, 1);
  EXPECT_NEAR(*poincare_ratio(g, phi), a.squaredNorm() * 3 / phi.squaredNorm(), 1e-12);
  EXPECT_FALSE(poincare_ratio(Matrix::Zero(3, 2), Vector::Zero(3)).has_value());
  EXPECT_GT(*poincare_ratio(g, phi), 0.0);
}

TEST(Poincare, ModelOverload) {
  Architecture arch;
  arch.hidden = {5};
  const EnergyModel m(arch, 1);
  Matrix xb = prior_sample(2, 8, 1.0, 1), eps = prior_sample(2, 8, 1.0, 2);
  const PerturbedBatch b = perturb_batch(xb, eps, Vector::Constant(8, 0.4), ScheduleParams{});
  const auto r = poincare_ratio(m, b);
  ASSERT_TRUE(r.has_value());
  EXPECT_NEAR(*r, *poincare_ratio(m.grad_x(b.x, b.t), m.energies(b.x, b.t)), 1e-14);
}

TEST(DensityGrid, SingleGaussianArgmaxAtMean) {
  Matrix d(1, 2);
  d << 1.0, -0.5;
  const MixtureOracle o(d, ScheduleParams{});
  const Bounds box{-2, 2, -2, 2};
  const DensityGrid g = oracle_density_grid(o, 0.8, box, 41, 41);
  const auto [x, y] = g.argmax();
  EXPECT_NEAR(x, 0.8, g.cell_width() / 2 + 1e-12);
  EXPECT_NEAR(y, -0.4, g.cell_height() / 2 + 1e-12);
}

TEST(DensityGrid, ZeroPotentialBowlPeaksAtOrigin) {
  struct Zero {
    Vector energy(const Matrix& X, double) const { return Vector::Zero(X.rows()); }
    Matrix grad(const Matrix& X, double) const { return Matrix::Zero(X.rows(), X.cols()); }
  };
  struct Shifted : Zero {
    Vector energy(const Matrix& X, double) const { return Vector::Constant(X.rows(), 5.0); }
  };
  const BoltzmannEnergy e(Zero{}, ScheduleParams{});
  const BoltzmannEnergy s(Shifted{}, ScheduleParams{});
  const Bounds box{-2, 2, -2, 2};
  const DensityGrid g = density_grid([&](const Matrix& X) { return e.energy(X); }, box, 21, 21);
  const DensityGrid h = density_grid([&](const Matrix& X) { return s.energy(X); }, box, 21, 21);
  EXPECT_NEAR(g.argmax().first, 0.0, 1e-12);
  EXPECT_NEAR(g.argmax().second, 0.0, 1e-12);
  EXPECT_EQ(g.argmax(), h.argmax());
}

TEST(DensityGrid, CoverageCountsTopCells) {
  DensityGrid g;
  g.bounds = {0, 2, 0, 2};
  g.nx = g.ny = 2;
  g.values = Matrix(2, 2);
  g.values << 4, 1, 1, 1;  // only cell (0, 0) is in the top quarter
  Matrix pts(2, 2);
  pts << 0.5, 0.5, 1.5, 1.5;
  EXPECT_DOUBLE_EQ(top_cell_coverage(g, pts, 0.25), 0.5);
  EXPECT_THROW(density_grid([](const Matrix& X) { return Vector::Zero(X.rows()); }, g.bounds, 1, 4), ConfigError);
}
