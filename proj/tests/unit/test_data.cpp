#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "vpfb/csv.hpp"
#include "vpfb/data.hpp"

using namespace vpfb;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("vpfb_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Data, NoiselessMoonsLieOnArcs) {
  DatasetSpec d;
  d.noise = 0.0;
  d.n_train = 500;
  d.n_test = 10;
  const DatasetSplit s = generate(d);
  for (Eigen::Index i = 0; i < s.train.points.rows(); ++i) {
    // Undo the centering shift.
    const double x = s.train.points(i, 0) + 0.5, y = s.train.points(i, 1) + 0.25;
    const int label = s.train.labels[static_cast<std::size_t>(i)];
    if (label == 0) {
      EXPECT_NEAR(x * x + y * y, 1.0, 1e-12);
      EXPECT_GE(y, -1e-12);
    } else {
      EXPECT_NEAR((x - 1) * (x - 1) + (y - 0.5) * (y - 0.5), 1.0, 1e-12);
      EXPECT_LE(y, 0.5 + 1e-12);
    }
  }
}

TEST(Data, FixedSeedGivesIdenticalCsv) {
  const fs::path dir = temp_dir("csv");
  DatasetSpec d;
  d.n_train = 300;
  write_points_csv(dir / "a.csv", generate(d).train.points, generate(d).train.labels);
  write_points_csv(dir / "b.csv", generate(d).train.points, generate(d).train.labels);
  EXPECT_EQ(slurp(dir / "a.csv"), slurp(dir / "b.csv"));
  const LabelledPoints back = read_points_csv(dir / "a.csv");
  EXPECT_EQ(back.points, generate(d).train.points);
  EXPECT_EQ(back.labels, generate(d).train.labels);
}

TEST(Data, TrainAndTestDiffer) {
  const DatasetSplit s = generate(DatasetSpec{});
  EXPECT_NE(Matrix(s.train.points.topRows(10)), Matrix(s.test.points.topRows(10)));
}

TEST(Data, MixtureComponentMeans) {
  DatasetSpec d;
  d.name = "gaussian_mixture_k";
  d.components = 4;
  d.noise = 0.2;
  d.n_train = 40000;
  const DatasetSplit s = generate(d);
  const Matrix means = d.mixture_means();
  for (int k = 0; k < 4; ++k) {
    Vector sum = Vector::Zero(2);
    int count = 0;
    for (Eigen::Index i = 0; i < s.train.points.rows(); ++i) {
      if (s.train.labels[static_cast<std::size_t>(i)] != k) continue;
      sum += s.train.points.row(i).transpose();
      ++count;
    }
    ASSERT_GT(count, 0);
    const Vector mean = sum / count;
    for (int j = 0; j < 2; ++j) EXPECT_NEAR(mean[j], means(k, j), 3.0 * d.noise / std::sqrt(count));
  }
}

TEST(Data, EveryDatasetInsideItsBox) {
  for (const char* name : {"two_moons", "gaussian_mixture_k", "checkerboard", "spirals"}) {
    DatasetSpec d;
    d.name = name;
    d.n_train = 2000;
    const DatasetSplit s = generate(d);
    EXPECT_GE(s.bounds.lo_x, -4.0);
    EXPECT_LE(s.bounds.hi_x, 4.0);
    for (Eigen::Index i = 0; i < s.train.points.rows(); ++i) {
      EXPECT_TRUE(s.bounds.contains(s.train.points(i, 0), s.train.points(i, 1))) << name;
    }
  }
}

TEST(Data, PriorMoments) {
  const int N = 100000;
  const Matrix x = prior_sample(2, N, 1.5, 4);
  for (int j = 0; j < 2; ++j) {
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().sum() / (N - 1);
    EXPECT_NEAR(mean, 0.0, 4.0 * 1.5 / std::sqrt(N));
    EXPECT_NEAR(var / 2.25, 1.0, 0.03);
  }
  const double cov = ((x.col(0).array() - x.col(0).mean()) * (x.col(1).array() - x.col(1).mean())).mean();
  EXPECT_NEAR(cov, 0.0, 4.0 * 2.25 / std::sqrt(N));
  EXPECT_EQ(prior_sample(2, 5, 1.0, 9), prior_sample(2, 5, 1.0, 9));
  EXPECT_THROW(prior_sample(2, 5, 0.0, 9), ConfigError);
}

TEST(Data, InvalidSpecsRejected) {
  DatasetSpec d;
  d.name = "cifar";
  EXPECT_THROW(generate(d), ConfigError);
  d = {};
  d.noise = -1.0;
  EXPECT_THROW(generate(d), ConfigError);
}

TEST(Data, MalformedCsvRejected) {
  const fs::path dir = temp_dir("bad_csv");
  std::ofstream(dir / "bad.csv") << "x1,x2\n1,abc\n";
  EXPECT_THROW(read_points_csv(dir / "bad.csv"), IoError);
  std::ofstream(dir / "hdr.csv") << "a,b\n1,2\n";
  EXPECT_THROW(read_points_csv(dir / "hdr.csv"), IoError);
  EXPECT_THROW(read_points_csv(dir / "missing.csv"), IoError);
}
