#ifndef VPFB_DATA_HPP
#define VPFB_DATA_HPP

// Seeded 2D toy datasets and the Gaussian prior.
//
// Every generator is a pure function of its parameters and seed. Points that
// fall outside the dataset's bounding box are redrawn, so the box documented
// by bounds() always holds:
//
//   two_moons            [-2, 2] x [-1.5, 1.5] at scale 1 (scales linearly)
//   gaussian_mixture_k   [-r - 1.5, r + 1.5]^2 for ring radius r (default 2)
//   checkerboard         [-2, 2]^2
//   spirals              [-3, 3]^2

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpfb/error.hpp"
#include "vpfb/perturbation.hpp"

namespace vpfb {

/// Axis-aligned box [lo_x, hi_x] x [lo_y, hi_y].
struct Bounds {
  double lo_x = -1.0, hi_x = 1.0, lo_y = -1.0, hi_y = 1.0;

  bool contains(double x, double y) const { return x >= lo_x && x <= hi_x && y >= lo_y && y <= hi_y; }
  double area() const { return (hi_x - lo_x) * (hi_y - lo_y); }
  void validate() const { detail::require(lo_x < hi_x && lo_y < hi_y, "bounds: empty box"); }
};

struct DatasetSpec {
  std::string name = "two_moons";  // two_moons | gaussian_mixture_k | checkerboard | spirals
  double noise = 0.05;             // Gaussian jitter std (component std for the mixture)
  int components = 8;              // mixture only
  double radius = 2.0;             // mixture ring radius
  double scale = 1.0;              // two_moons only
  std::uint64_t seed = 0;
  int n_train = 8192;
  int n_test = 4096;

  void validate() const {
    detail::require(name == "two_moons" || name == "gaussian_mixture_k" || name == "checkerboard" || name == "spirals",
                    "dataset: unknown name '" + name + "'");
    detail::require(noise >= 0.0 && std::isfinite(noise), "dataset: noise must be >= 0");
    detail::require(name != "gaussian_mixture_k" || noise > 0.0, "dataset: mixture needs noise > 0");
    detail::require(components >= 1, "dataset: components must be >= 1");
    detail::require(radius > 0.0, "dataset: radius must be > 0");
    detail::require(scale > 0.0 && scale <= 2.5, "dataset: scale must be in (0, 2.5]");
    detail::require(n_train >= 1 && n_test >= 0, "dataset: split sizes must be positive");
  }

  /// Number of classes the generator labels points with (0 = unlabelled).
  int num_classes() const {
    if (name == "two_moons" || name == "spirals") return 2;
    if (name == "gaussian_mixture_k") return components;
    return 0;
  }

  Bounds bounds() const {
    if (name == "two_moons") return {-2.0 * scale, 2.0 * scale, -1.5 * scale, 1.5 * scale};
    if (name == "gaussian_mixture_k") return {-radius - 1.5, radius + 1.5, -radius - 1.5, radius + 1.5};
    if (name == "checkerboard") return {-2.0, 2.0, -2.0, 2.0};
    return {-3.0, 3.0, -3.0, 3.0};
  }

  /// Component means of the mixture, one per row.
  Matrix mixture_means() const {
    Matrix m(components, 2);
    for (int k = 0; k < components; ++k) {
      const double a = 2.0 * std::numbers::pi * k / components;
      m(k, 0) = radius * std::cos(a);
      m(k, 1) = radius * std::sin(a);
    }
    return m;
  }
};

struct LabelledPoints {
  Matrix points;            // N x 2
  std::vector<int> labels;  // empty if unlabelled
};

struct DatasetSplit {
  LabelledPoints train;
  LabelledPoints test;
  Bounds bounds;
};

namespace detail {

inline void draw_point(const DatasetSpec& d, std::mt19937_64& rng, double& x, double& y, int& label) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  if (d.name == "two_moons") {
    // Upper arc centered at (0, 0), lower arc at (1, 0.5); the pair is then
    // shifted so its bounding box is centered at the origin.
    const double theta = std::numbers::pi * unif(rng);
    label = unif(rng) < 0.5 ? 0 : 1;
    if (label == 0) {
      x = std::cos(theta);
      y = std::sin(theta);
    } else {
      x = 1.0 - std::cos(theta);
      y = 0.5 - std::sin(theta);
    }
    x += d.noise * normal(rng) - 0.5;
    y += d.noise * normal(rng) - 0.25;
    x *= d.scale;
    y *= d.scale;
  } else if (d.name == "gaussian_mixture_k") {
    label = static_cast<int>(unif(rng) * d.components);
    if (label >= d.components) label = d.components - 1;
    const double a = 2.0 * std::numbers::pi * label / d.components;
    x = d.radius * std::cos(a) + d.noise * normal(rng);
    y = d.radius * std::sin(a) + d.noise * normal(rng);
  } else if (d.name == "checkerboard") {
    // 4 x 4 board on [-2, 2]^2; occupied cells have (i + j) even.
    label = -1;
    const int i = static_cast<int>(unif(rng) * 4.0) % 4;
    int j = static_cast<int>(unif(rng) * 2.0) % 2;
    j = 2 * j + (i % 2);
    x = -2.0 + i + unif(rng) + d.noise * normal(rng);
    y = -2.0 + j + unif(rng) + d.noise * normal(rng);
  } else {
    // Two interleaved Archimedean arms, r in [0.3, 2.6].
    label = unif(rng) < 0.5 ? 0 : 1;
    const double s = std::sqrt(unif(rng));
    const double theta = 3.0 * std::numbers::pi * s + (label == 1 ? std::numbers::pi : 0.0);
    const double r = 0.3 + 2.3 * s;
    x = r * std::cos(theta) + d.noise * normal(rng);
    y = r * std::sin(theta) + d.noise * normal(rng);
  }
}

inline LabelledPoints draw_points(const DatasetSpec& d, int count, std::mt19937_64& rng) {
  LabelledPoints out;
  out.points.resize(count, 2);
  const bool labelled = d.num_classes() > 0;
  const Bounds box = d.bounds();
  for (int i = 0; i < count; ++i) {
    double x = 0.0, y = 0.0;
    int label = -1;
    int attempts = 0;
    do {
      draw_point(d, rng, x, y, label);
      if (++attempts > 10000) throw NumericError("dataset: cannot place points inside the bounding box");
    } while (!box.contains(x, y));
    out.points(i, 0) = x;
    out.points(i, 1) = y;
    if (labelled) out.labels.push_back(label);
  }
  return out;
}

}  // namespace detail

/// Train and held-out splits drawn from independent streams of the same seed.
inline DatasetSplit generate(const DatasetSpec& d) {
  d.validate();
  std::seed_seq train_seq{d.seed, std::uint64_t{0x7472}};
  std::seed_seq test_seq{d.seed, std::uint64_t{0x7465}};
  std::mt19937_64 train_rng(train_seq);
  std::mt19937_64 test_rng(test_seq);
  DatasetSplit s;
  s.train = detail::draw_points(d, d.n_train, train_rng);
  s.test = detail::draw_points(d, d.n_test, test_rng);
  s.bounds = d.bounds();
  return s;
}

/// i.i.d. N(0, omega^2 I) draws, one per row.
inline Matrix prior_sample(Eigen::Index dim, Eigen::Index count, double omega, std::uint64_t seed) {
  detail::require(omega > 0.0 && std::isfinite(omega), "prior_sample: omega must be > 0");
  detail::require(dim >= 1, "prior_sample: dim must be >= 1");
  detail::require(count >= 1, "prior_sample: count must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, omega);
  Matrix out(count, dim);
  for (Eigen::Index i = 0; i < count; ++i) {
    for (Eigen::Index j = 0; j < dim; ++j) out(i, j) = normal(rng);
  }
  return out;
}

/// Uniform draws over a box, used as out-of-distribution negatives.
inline Matrix uniform_box(const Bounds& b, Eigen::Index count, std::uint64_t seed) {
  b.validate();
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(b.lo_x, b.hi_x), uy(b.lo_y, b.hi_y);
  Matrix out(count, 2);
  for (Eigen::Index i = 0; i < count; ++i) {
    out(i, 0) = ux(rng);
    out(i, 1) = uy(rng);
  }
  return out;
}

}  // namespace vpfb

#endif  // VPFB_DATA_HPP
