#ifndef VPFB_PERTURBATION_HPP
#define VPFB_PERTURBATION_HPP

// Conditional homotopy kernel rho(x | x_bar, t) = N(mu x_bar, sigma^2 I), its
// innovation statistics, and the flow-matching conditional vector field.

#include <vector>

#include <Eigen/Core>

#include "vpfb/error.hpp"
#include "vpfb/schedule.hpp"

namespace vpfb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// One reparameterized training draw x = mu(t) x_bar + sigma(t) eps.
struct PerturbedSample {
  Vector x_bar;
  Vector eps;
  double t = 0.0;
  Vector x;
  double gamma = 0.0;      // innovation at (x, x_bar, t)
  double gamma_bar = 0.0;  // closed-form kernel expectation of gamma given x_bar
  Vector v_cond;           // conditional vector field mu' x_bar + sigma' eps
  int label = -1;          // class index for conditional models, -1 if unused
};

/// (alpha'/omega^2) |x|^2 + (beta'/nu^2) |x - x_bar|^2
inline double innovation(const Vector& x, const Vector& x_bar, double t, const ScheduleParams& p) {
  detail::require(x.size() == x_bar.size(), "innovation: dimension mismatch");
  const ScheduleEval e = eval_schedule(t, p);
  return e.alpha_rate * x.squaredNorm() + e.beta_rate * (x - x_bar).squaredNorm();
}

/// E[gamma] under x ~ N(mu x_bar, sigma^2 I):
/// (alpha'/omega^2)(|mu x_bar|^2 + n sigma^2) + (beta'/nu^2)(|(mu - 1) x_bar|^2 + n sigma^2)
inline double innovation_mean(const Vector& x_bar, double t, const ScheduleParams& p, Eigen::Index n) {
  detail::require(n == x_bar.size(), "innovation_mean: dimension mismatch");
  const ScheduleEval e = eval_schedule(t, p);
  const double xb2 = x_bar.squaredNorm();
  const double var = static_cast<double>(n) * e.sigma * e.sigma;
  return e.alpha_rate * (e.mu * e.mu * xb2 + var) + e.beta_rate * ((e.mu - 1.0) * (e.mu - 1.0) * xb2 + var);
}

inline Vector conditional_field(const Vector& x_bar, const Vector& eps, double t, const ScheduleParams& p) {
  detail::require(x_bar.size() == eps.size(), "conditional_field: dimension mismatch");
  const ScheduleEval e = eval_schedule(t, p);
  return e.mu_dot * x_bar + e.sigma_dot * eps;
}

/// grad_x log rho(x | x_bar, t) = -(x - mu x_bar) / sigma^2
inline Vector conditional_score(const Vector& x, const Vector& x_bar, double t, const ScheduleParams& p) {
  detail::require(x.size() == x_bar.size(), "conditional_score: dimension mismatch");
  const ScheduleEval e = eval_schedule(t, p);
  return -(x - e.mu * x_bar) / (e.sigma * e.sigma);
}

inline PerturbedSample perturb(const Vector& x_bar, const Vector& eps, double t, const ScheduleParams& p) {
  detail::require(x_bar.size() == eps.size(), "perturb: x_bar and eps dimensions differ");
  const ScheduleEval e = eval_schedule(t, p);
  PerturbedSample s;
  s.x_bar = x_bar;
  s.eps = eps;
  s.t = e.t;
  s.x = e.mu * x_bar + e.sigma * eps;
  s.gamma = e.alpha_rate * s.x.squaredNorm() + e.beta_rate * (s.x - x_bar).squaredNorm();
  s.gamma_bar = innovation_mean(x_bar, e.t, p, x_bar.size());
  s.v_cond = e.mu_dot * x_bar + e.sigma_dot * eps;
  return s;
}

/// A batch of perturbed draws, one sample per row.
struct PerturbedBatch {
  Matrix x_bar;       // B x n
  Matrix eps;         // B x n
  Vector t;           // B
  Matrix x;           // B x n
  Vector gamma;       // B
  Vector gamma_bar;   // B
  Matrix v_cond;      // B x n
  std::vector<int> labels;  // empty, or one class per row

  Eigen::Index size() const { return x.rows(); }
  Eigen::Index dim() const { return x.cols(); }
};

/// Row-wise perturb(). `labels` may be empty.
inline PerturbedBatch perturb_batch(const Matrix& x_bar, const Matrix& eps, const Vector& t, const ScheduleParams& p,
                                    std::vector<int> labels = {}) {
  detail::require(x_bar.rows() == eps.rows() && x_bar.cols() == eps.cols(), "perturb_batch: x_bar and eps shapes differ");
  detail::require(t.size() == x_bar.rows(), "perturb_batch: one time per row required");
  detail::require(labels.empty() || static_cast<Eigen::Index>(labels.size()) == x_bar.rows(),
                  "perturb_batch: one label per row required");
  const Eigen::Index B = x_bar.rows();
  const Eigen::Index n = x_bar.cols();
  PerturbedBatch b;
  b.x_bar = x_bar;
  b.eps = eps;
  b.t.resize(B);
  b.x.resize(B, n);
  b.gamma.resize(B);
  b.gamma_bar.resize(B);
  b.v_cond.resize(B, n);
  for (Eigen::Index i = 0; i < B; ++i) {
    const PerturbedSample s = perturb(x_bar.row(i).transpose(), eps.row(i).transpose(), t[i], p);
    b.t[i] = s.t;
    b.x.row(i) = s.x.transpose();
    b.gamma[i] = s.gamma;
    b.gamma_bar[i] = s.gamma_bar;
    b.v_cond.row(i) = s.v_cond.transpose();
  }
  b.labels = std::move(labels);
  return b;
}

inline PerturbedBatch make_batch(const std::vector<PerturbedSample>& samples) {
  detail::require(!samples.empty(), "make_batch: empty sample list");
  const Eigen::Index B = static_cast<Eigen::Index>(samples.size());
  const Eigen::Index n = samples.front().x.size();
  PerturbedBatch b;
  b.x_bar.resize(B, n);
  b.eps.resize(B, n);
  b.t.resize(B);
  b.x.resize(B, n);
  b.gamma.resize(B);
  b.gamma_bar.resize(B);
  b.v_cond.resize(B, n);
  const bool labelled = samples.front().label >= 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const PerturbedSample& s = samples[static_cast<std::size_t>(i)];
    detail::require(s.x.size() == n, "make_batch: samples of mixed dimension");
    b.x_bar.row(i) = s.x_bar.transpose();
    b.eps.row(i) = s.eps.transpose();
    b.t[i] = s.t;
    b.x.row(i) = s.x.transpose();
    b.gamma[i] = s.gamma;
    b.gamma_bar[i] = s.gamma_bar;
    b.v_cond.row(i) = s.v_cond.transpose();
    if (labelled) b.labels.push_back(s.label);
  }
  return b;
}

}  // namespace vpfb

#endif  // VPFB_PERTURBATION_HPP
