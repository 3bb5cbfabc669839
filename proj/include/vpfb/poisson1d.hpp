#ifndef VPFB_POISSON1D_HPP
#define VPFB_POISSON1D_HPP

// One-dimensional density-weighted Poisson problem at a fixed time,
//
//   d/dx (rho_bar(x) dPhi/dx) = -d rho_bar / dt,
//
// solved two ways: by integrating the right-hand side directly, and by
// minimizing the Ritz energy over a piecewise-linear potential on a grid.

#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "vpfb/autodiff.hpp"
#include "vpfb/energy_model.hpp"
#include "vpfb/error.hpp"
#include "vpfb/loss.hpp"
#include "vpfb/mixture_oracle.hpp"
#include "vpfb/perturbation.hpp"

namespace vpfb {

inline Vector uniform_nodes(double lo, double hi, int count) {
  detail::require(hi > lo && count >= 3, "uniform_nodes: need hi > lo and at least 3 nodes");
  return Vector::LinSpaced(count, lo, hi);
}

/// dPhi/dx at every node from (1/rho_bar(x)) * integral of the right-hand
/// side, by the trapezoid rule. Left of the density peak the integral runs
/// from the left end, right of it from the right end, so neither tail is
/// computed as a difference of two large numbers.
inline Vector poisson_gradient_fd(const MixtureOracle& oracle, double t, const Vector& nodes) {
  detail::require(oracle.dim() == 1, "poisson_gradient_fd: one-dimensional oracle required");
  const Eigen::Index N = nodes.size();
  Vector rhs(N), rho(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const Vector x = Vector::Constant(1, nodes[i]);
    rhs[i] = oracle.poisson_rhs(x, t);
    rho[i] = oracle.density(x, t);
  }
  Vector left = Vector::Zero(N), right = Vector::Zero(N);
  for (Eigen::Index i = 1; i < N; ++i) {
    left[i] = left[i - 1] + 0.5 * (nodes[i] - nodes[i - 1]) * (rhs[i] + rhs[i - 1]);
  }
  for (Eigen::Index i = N - 2; i >= 0; --i) {
    right[i] = right[i + 1] - 0.5 * (nodes[i + 1] - nodes[i]) * (rhs[i] + rhs[i + 1]);
  }
  Eigen::Index peak = 0;
  rho.maxCoeff(&peak);
  Vector grad(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double flux = i <= peak ? left[i] : right[i];
    grad[i] = rho[i] > 0.0 ? flux / rho[i] : 0.0;
  }
  return grad;
}

/// Piecewise-linear potential on fixed nodes, evaluated at the element
/// midpoints. The midpoints are tiled `repeats` times, so row c * E + j is
/// element j of copy c.
class GridPotential1D {
 public:
  GridPotential1D(Vector nodes, Eigen::Index repeats) : nodes_(std::move(nodes)), repeats_(repeats) {
    detail::require(nodes_.size() >= 2, "GridPotential1D: at least two nodes required");
    detail::require(repeats_ >= 1, "GridPotential1D: repeats must be positive");
    const Eigen::Index E = nodes_.size() - 1;
    inv_h_.resize(1, E);
    for (Eigen::Index j = 0; j < E; ++j) {
      const double h = nodes_[j + 1] - nodes_[j];
      detail::require(h > 0.0, "GridPotential1D: nodes must increase");
      inv_h_(0, j) = 1.0 / h;
    }
  }

  /// Phi and dPhi/dx at the tiled midpoints for node values `values` (N x 1).
  FieldEvaluation field(ad::Tape& tape, ad::Var values) const {
    const Eigen::Index E = nodes_.size() - 1;
    const ad::Var row = ad::transpose(values);
    const ad::Var lo = ad::slice_cols(row, 0, E);
    const ad::Var hi = ad::slice_cols(row, 1, E);
    const ad::Var phi = 0.5 * (lo + hi);
    const ad::Var slope = (hi - lo) * tape.constant(inv_h_);
    return {ad::transpose(tile(phi)), ad::transpose(tile(slope)), tape.constant(Matrix::Zero(E * repeats_, 1))};
  }

  const Vector& nodes() const { return nodes_; }
  Eigen::Index rows() const { return (nodes_.size() - 1) * repeats_; }

 private:
  ad::Var tile(ad::Var row) const {
    ad::Var out = row;
    for (Eigen::Index c = 1; c < repeats_; ++c) out = ad::concat_cols(out, row);
    return out;
  }

  Vector nodes_;
  Eigen::Index repeats_;
  Matrix inv_h_;
};

/// Quadrature batch at element midpoints: row k * E + j pairs data point k
/// with midpoint j and carries weight h * rho(x | x_bar_k, t) / K.
struct RitzQuadrature {
  PerturbedBatch batch;
  Vector weights;
  Vector midpoints;
};

inline RitzQuadrature ritz_quadrature(const MixtureOracle& oracle, double t, const Vector& nodes) {
  detail::require(oracle.dim() == 1, "ritz_quadrature: one-dimensional oracle required");
  const ScheduleEval e = eval_schedule(t, oracle.schedule());
  const Eigen::Index E = nodes.size() - 1;
  const Eigen::Index K = oracle.size();
  Matrix x_bar(E * K, 1), eps(E * K, 1);
  RitzQuadrature q;
  q.weights.resize(E * K);
  q.midpoints.resize(E);
  const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * e.sigma * e.sigma);
  for (Eigen::Index j = 0; j < E; ++j) {
    const double m = 0.5 * (nodes[j] + nodes[j + 1]);
    const double h = nodes[j + 1] - nodes[j];
    q.midpoints[j] = m;
    for (Eigen::Index k = 0; k < K; ++k) {
      const double xb = oracle.data()(k, 0);
      const double z = (m - e.mu * xb) / e.sigma;
      x_bar(k * E + j, 0) = xb;
      eps(k * E + j, 0) = z;
      q.weights[k * E + j] = h * norm * std::exp(-0.5 * z * z) / static_cast<double>(K);
    }
  }
  q.batch = perturb_batch(x_bar, eps, Vector::Constant(E * K, e.t), oracle.schedule());
  return q;
}

struct RitzGridSolution {
  Vector nodes;
  Vector values;     // Phi at nodes, pinned to 0 at the middle node
  Vector midpoints;
  Vector gradient;   // dPhi/dx on each element
  double loss = 0.0;
};

/// Minimizes the quadrature Ritz loss over node values. The loss is quadratic,
/// so its Hessian is assembled from autodiff gradients at unit vectors and the
/// minimizer follows from one linear solve. The additive constant is fixed by
/// pinning the middle node.
inline RitzGridSolution minimize_ritz_on_grid(const MixtureOracle& oracle, double t, const Vector& nodes) {
  const RitzQuadrature q = ritz_quadrature(oracle, t, nodes);
  const GridPotential1D grid(nodes, oracle.size());
  const Eigen::Index N = nodes.size();

  auto loss_grad = [&](const Vector& values, double* loss) {
    ad::Tape tape;
    ad::Var v = tape.variable(values);
    const FieldEvaluation f = grid.field(tape, v);
    ad::Var L = ritz_core_loss(tape, f, q.batch, true, q.weights);
    if (loss) *loss = L.scalar();
    return Vector(tape.grad(L, {v})[0].value().col(0));
  };

  const Vector g0 = loss_grad(Vector::Zero(N), nullptr);
  Matrix H(N, N);
  for (Eigen::Index j = 0; j < N; ++j) {
    H.col(j) = loss_grad(Vector::Unit(N, j), nullptr) - g0;
  }
  H = 0.5 * (H + H.transpose());

  const Eigen::Index pin = N / 2;
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < N; ++i) {
    if (i != pin) free.push_back(i);
  }
  const Eigen::Index F = static_cast<Eigen::Index>(free.size());
  Matrix Hf(F, F);
  Vector bf(F);
  for (Eigen::Index a = 0; a < F; ++a) {
    bf[a] = -g0[free[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < F; ++b) Hf(a, b) = H(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
  }
  const Eigen::LDLT<Matrix> ldlt(Hf);
  if (ldlt.info() != Eigen::Success) throw NumericError("minimize_ritz_on_grid: factorization failed");
  const Vector xf = ldlt.solve(bf);

  RitzGridSolution s;
  s.nodes = nodes;
  s.values = Vector::Zero(N);
  for (Eigen::Index a = 0; a < F; ++a) s.values[free[static_cast<std::size_t>(a)]] = xf[a];
  s.midpoints = q.midpoints;
  s.gradient.resize(N - 1);
  for (Eigen::Index j = 0; j + 1 < N; ++j) s.gradient[j] = (s.values[j + 1] - s.values[j]) / (nodes[j + 1] - nodes[j]);
  loss_grad(s.values, &s.loss);
  return s;
}

/// ||a - b|| / ||b|| restricted to entries with |x - center| <= half_width.
inline double relative_l2_on(const Vector& x, const Vector& a, const Vector& b, double center, double half_width) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x[i] - center) > half_width) continue;
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  detail::require(den > 0.0, "relative_l2_on: reference vanishes on the window");
  return std::sqrt(num / den);
}

}  // namespace vpfb

#endif  // VPFB_POISSON1D_HPP
