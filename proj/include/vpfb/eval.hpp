#ifndef VPFB_EVAL_HPP
#define VPFB_EVAL_HPP

// Evaluation: density grids and coverage, AUROC, energy histograms,
// energy distance and the Poincare ratio.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpfb/csv.hpp"
#include "vpfb/data.hpp"
#include "vpfb/energy_model.hpp"
#include "vpfb/error.hpp"
#include "vpfb/mixture_oracle.hpp"
#include "vpfb/perturbation.hpp"

namespace vpfb {

/// Log-density (up to a constant) sampled at the centers of an nx x ny tiling of a box.
struct DensityGrid {
  Bounds bounds;
  int nx = 0, ny = 0;
  Matrix values;  // ny x nx, row j is y-cell j (bottom to top)
  std::string source;

  double cell_width() const { return (bounds.hi_x - bounds.lo_x) / nx; }
  double cell_height() const { return (bounds.hi_y - bounds.lo_y) / ny; }
  double x_center(int i) const { return bounds.lo_x + (i + 0.5) * cell_width(); }
  double y_center(int j) const { return bounds.lo_y + (j + 0.5) * cell_height(); }

  /// Cell containing (x, y), or nullopt outside the box.
  std::optional<std::pair<int, int>> cell_of(double x, double y) const {
    if (!bounds.contains(x, y)) return std::nullopt;
    const int i = std::min(nx - 1, static_cast<int>((x - bounds.lo_x) / cell_width()));
    const int j = std::min(ny - 1, static_cast<int>((y - bounds.lo_y) / cell_height()));
    return std::make_pair(i, j);
  }

  /// Center of the highest-valued cell.
  std::pair<double, double> argmax() const {
    Eigen::Index r = 0, c = 0;
    values.maxCoeff(&r, &c);
    return {x_center(static_cast<int>(c)), y_center(static_cast<int>(r))};
  }

  /// Cell centers in row-major order (y outer, x inner), one per row.
  Matrix centers() const {
    Matrix X(static_cast<Eigen::Index>(nx) * ny, 2);
    for (int j = 0; j < ny; ++j) {
      for (int i = 0; i < nx; ++i) {
        X(static_cast<Eigen::Index>(j) * nx + i, 0) = x_center(i);
        X(static_cast<Eigen::Index>(j) * nx + i, 1) = y_center(j);
      }
    }
    return X;
  }
};

using LogDensityFn = std::function<Vector(const Matrix&)>;

/// Evaluates `log_density` at every cell center, in chunks of `chunk` points.
inline DensityGrid density_grid(const LogDensityFn& log_density, const Bounds& bounds, int nx, int ny,
                                std::string source = "custom", Eigen::Index chunk = 4096) {
  bounds.validate();
  detail::require(nx >= 2 && ny >= 2, "density_grid: resolution must be >= 2 per axis");
  DensityGrid g;
  g.bounds = bounds;
  g.nx = nx;
  g.ny = ny;
  g.source = std::move(source);
  const Matrix X = g.centers();
  Vector v(X.rows());
  for (Eigen::Index s = 0; s < X.rows(); s += chunk) {
    const Eigen::Index m = std::min(chunk, X.rows() - s);
    v.segment(s, m) = log_density(X.middleRows(s, m));
  }
  if (!v.allFinite()) throw NumericError("density_grid: non-finite log-density on the grid");
  g.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), ny, nx);
  return g;
}

/// Grid of the exact mixture log-density at time t.
inline DensityGrid oracle_density_grid(const MixtureOracle& oracle, double t, const Bounds& bounds, int nx, int ny) {
  return density_grid(
      [&](const Matrix& X) {
        Vector out(X.rows());
        for (Eigen::Index i = 0; i < X.rows(); ++i) out[i] = oracle.log_density(X.row(i).transpose(), t);
        return out;
      },
      bounds, nx, ny, "mixture_oracle");
}

/// Fraction of `points` whose cell is among the top `fraction` of cells by value.
/// Points outside the grid count as uncovered.
inline double top_cell_coverage(const DensityGrid& g, const Matrix& points, double fraction = 0.1) {
  detail::require(fraction > 0.0 && fraction <= 1.0, "top_cell_coverage: fraction must be in (0, 1]");
  detail::require(points.rows() >= 1 && points.cols() == 2, "top_cell_coverage: need 2D points");
  const Eigen::Index cells = g.values.size();
  const Eigen::Index keep = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(fraction * cells)));
  std::vector<double> sorted(g.values.data(), g.values.data() + cells);
  std::nth_element(sorted.begin(), sorted.begin() + (keep - 1), sorted.end(), std::greater<>());
  const double threshold = sorted[static_cast<std::size_t>(keep - 1)];
  Eigen::Index hit = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const auto c = g.cell_of(points(i, 0), points(i, 1));
    if (c && g.values(c->second, c->first) >= threshold) ++hit;
  }
  return static_cast<double>(hit) / static_cast<double>(points.rows());
}

/// Writes x,y,logp rows.
inline void write_grid_csv(const fs::path& path, const DensityGrid& g) {
  CsvWriter w(path, {"x", "y", "logp"});
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) w.row({g.x_center(i), g.y_center(j), g.values(j, i)});
  }
}

/// Binary graymap, brighter = higher value, top row = largest y. Values are
/// mapped linearly between the grid's `low_quantile` and maximum.
inline void write_grid_pgm(const fs::path& path, const DensityGrid& g, double low_quantile = 0.0) {
  ensure_parent_dir(path);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  std::vector<double> v(g.values.data(), g.values.data() + g.values.size());
  std::sort(v.begin(), v.end());
  const double lo = v[static_cast<std::size_t>(std::clamp(low_quantile, 0.0, 1.0) * (v.size() - 1))];
  const double hi = v.back();
  const double span = hi > lo ? hi - lo : 1.0;
  out << "P5\n" << g.nx << " " << g.ny << "\n255\n";
  for (int j = g.ny - 1; j >= 0; --j) {
    for (int i = 0; i < g.nx; ++i) {
      const double u = std::clamp((g.values(j, i) - lo) / span, 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * u))));
    }
  }
  if (!out) throw IoError("write failed on " + path.string());
}

/// P(score_in > score_out) + 1/2 P(score_in == score_out), via average ranks.
inline double auroc(const std::vector<double>& scores_in, const std::vector<double>& scores_out) {
  detail::require(!scores_in.empty() && !scores_out.empty(), "auroc: both score lists must be non-empty");
  const std::size_t n1 = scores_in.size(), n2 = scores_out.size();
  std::vector<std::pair<double, int>> all;
  all.reserve(n1 + n2);
  for (double s : scores_in) all.emplace_back(s, 1);
  for (double s : scores_out) all.emplace_back(s, 0);
  for (const auto& [s, _] : all) {
    if (std::isnan(s)) throw NumericError("auroc: NaN score");
  }
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second == 1) rank_sum += avg_rank;
    }
    i = j;
  }
  const double u = rank_sum - 0.5 * static_cast<double>(n1) * static_cast<double>(n1 + 1);
  return u / (static_cast<double>(n1) * static_cast<double>(n2));
}

struct EnergyHistogram {
  std::vector<double> edges;  // bins + 1
  std::vector<int> counts_a;
  std::vector<int> counts_b;
  double intersection = 0.0;  // sum of min of the normalized counts
};

/// Histogram of two value sets over their common range.
inline EnergyHistogram energy_histogram(const std::vector<double>& a, const std::vector<double>& b, int bins) {
  detail::require(bins >= 1, "energy_histogram: bins must be >= 1");
  detail::require(!a.empty() && !b.empty(), "energy_histogram: value sets must be non-empty");
  double lo = std::min(*std::min_element(a.begin(), a.end()), *std::min_element(b.begin(), b.end()));
  double hi = std::max(*std::max_element(a.begin(), a.end()), *std::max_element(b.begin(), b.end()));
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw NumericError("energy_histogram: non-finite energy");
  if (hi == lo) {
    lo -= 0.5;
    hi += 0.5;
  }
  EnergyHistogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int k = 0; k <= bins; ++k) h.edges[static_cast<std::size_t>(k)] = lo + (hi - lo) * k / bins;
  auto fill = [&](const std::vector<double>& v, std::vector<int>& counts) {
    counts.assign(static_cast<std::size_t>(bins), 0);
    for (double x : v) {
      int k = static_cast<int>((x - lo) / (hi - lo) * bins);
      counts[static_cast<std::size_t>(std::clamp(k, 0, bins - 1))]++;
    }
  };
  fill(a, h.counts_a);
  fill(b, h.counts_b);
  for (std::size_t k = 0; k < static_cast<std::size_t>(bins); ++k) {
    h.intersection += std::min(static_cast<double>(h.counts_a[k]) / a.size(), static_cast<double>(h.counts_b[k]) / b.size());
  }
  return h;
}

inline void write_histogram_csv(const fs::path& path, const EnergyHistogram& h) {
  CsvWriter w(path, {"bin_lo", "bin_hi", "count_a", "count_b"});
  for (std::size_t k = 0; k < h.counts_a.size(); ++k) {
    w.row({h.edges[k], h.edges[k + 1], static_cast<double>(h.counts_a[k]), static_cast<double>(h.counts_b[k])});
  }
}

namespace detail {

inline double mean_pairwise_distance(const Matrix& A, const Matrix& B) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    acc += (B.rowwise() - A.row(i)).rowwise().norm().sum();
  }
  return acc / (static_cast<double>(A.rows()) * static_cast<double>(B.rows()));
}

}  // namespace detail

/// 2 E|A - B| - E|A - A'| - E|B - B'| over all pairs (V-statistic, >= 0).
inline double energy_distance(const Matrix& A, const Matrix& B) {
  detail::require(A.rows() >= 1 && B.rows() >= 1, "energy_distance: sample sets must be non-empty");
  detail::require(A.cols() == B.cols(), "energy_distance: dimension mismatch");
  const double d = 2.0 * detail::mean_pairwise_distance(A, B) - detail::mean_pairwise_distance(A, A) -
                   detail::mean_pairwise_distance(B, B);
  return std::max(d, 0.0);
}

/// mean |grad Phi|^2 / mean Phi^2, or nullopt when mean Phi^2 <= floor.
inline std::optional<double> poincare_ratio(const Matrix& grad_x, const Vector& phi, double floor = 1e-12) {
  detail::require(grad_x.rows() == phi.size(), "poincare_ratio: one gradient per energy required");
  const double den = phi.squaredNorm() / static_cast<double>(phi.size());
  if (!(den > floor)) return std::nullopt;
  return grad_x.rowwise().squaredNorm().mean() / den;
}

inline std::optional<double> poincare_ratio(const EnergyModel& m, const PerturbedBatch& batch, double floor = 1e-12) {
  const Matrix g = m.grad_x(batch.x, batch.t, batch.labels);
  return poincare_ratio(g, m.energies(batch.x, batch.t, batch.labels), floor);
}

}  // namespace vpfb

#endif  // VPFB_EVAL_HPP
