#ifndef VPFB_MIXTURE_ORACLE_HPP
#define VPFB_MIXTURE_ORACLE_HPP

// Closed-form marginal homotopy for a finite dataset:
//
//   rho_bar(x, t) = (1/K) sum_k N(x; mu(t) x_bar_k, sigma(t)^2 I)
//
// with exact score, time derivative and posterior-weighted vector field.
// Used as a ground truth by tests, the verify command and density grids.

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpfb/error.hpp"
#include "vpfb/perturbation.hpp"
#include "vpfb/schedule.hpp"

namespace vpfb {

class MixtureOracle {
 public:
  static constexpr Eigen::Index kMaxDim = 3;
  static constexpr Eigen::Index kMaxComponents = 10000;

  /// `data` holds one point per row.
  MixtureOracle(Matrix data, ScheduleParams schedule) : data_(std::move(data)), schedule_(schedule) {
    detail::require(data_.rows() >= 1, "MixtureOracle: need at least one data point");
    detail::require(data_.rows() <= kMaxComponents, "MixtureOracle: at most 10^4 components");
    detail::require(data_.cols() >= 1 && data_.cols() <= kMaxDim, "MixtureOracle: dimension must be 1..3");
  }

  const Matrix& data() const { return data_; }
  const ScheduleParams& schedule() const { return schedule_; }
  Eigen::Index dim() const { return data_.cols(); }
  Eigen::Index size() const { return data_.rows(); }

  /// log N(x; mu x_bar_k, sigma^2 I) for every component k.
  Vector component_log_densities(const Vector& x, double t) const {
    check_dim(x);
    const ScheduleEval e = eval_schedule(t, schedule_);
    const double n = static_cast<double>(dim());
    const double var = e.sigma * e.sigma;
    const double log_norm = -0.5 * n * std::log(2.0 * std::numbers::pi * var);
    Vector out(size());
    for (Eigen::Index k = 0; k < size(); ++k) {
      const double d2 = (x.transpose() - e.mu * data_.row(k)).squaredNorm();
      out[k] = log_norm - 0.5 * d2 / var;
    }
    return out;
  }

  double log_density(const Vector& x, double t) const {
    const Vector lc = component_log_densities(x, t);
    const double m = lc.maxCoeff();
    if (!std::isfinite(m)) return -std::numeric_limits<double>::infinity();
    return m + std::log((lc.array() - m).exp().sum()) - std::log(static_cast<double>(size()));
  }

  double density(const Vector& x, double t) const { return std::exp(log_density(x, t)); }

  /// Posterior p(x_bar_k | x, t) over the K components.
  Vector posterior_weights(const Vector& x, double t) const {
    const Vector lc = component_log_densities(x, t);
    const double m = lc.maxCoeff();
    if (!std::isfinite(m)) {
      throw NumericError("MixtureOracle: density underflow at t=" + std::to_string(t));
    }
    Vector w = (lc.array() - m).exp();
    return w / w.sum();
  }

  /// grad_x log rho_bar = sum_k p(k | x) * (-(x - mu x_bar_k) / sigma^2)
  Vector score(const Vector& x, double t) const {
    const ScheduleEval e = eval_schedule(t, schedule_);
    const Vector w = posterior_weights(x, t);
    const Vector mean = e.mu * (data_.transpose() * w);
    return -(x - mean) / (e.sigma * e.sigma);
  }

  /// Posterior-weighted average of the conditional vector field.
  Vector marginal_field(const Vector& x, double t) const {
    const ScheduleEval e = eval_schedule(t, schedule_);
    const Vector w = posterior_weights(x, t);
    Vector v = Vector::Zero(dim());
    for (Eigen::Index k = 0; k < size(); ++k) {
      const Vector xb = data_.row(k).transpose();
      const Vector eps = (x - e.mu * xb) / e.sigma;
      v += w[k] * (e.mu_dot * xb + e.sigma_dot * eps);
    }
    return v;
  }

  /// d rho_bar / dt = -1/2 (1/K) sum_k rho(x | x_bar_k, t) (gamma(x, x_bar_k, t) - gamma_bar(x_bar_k, t))
  double time_derivative(const Vector& x, double t) const {
    const Vector lc = component_log_densities(x, t);
    double acc = 0.0;
    for (Eigen::Index k = 0; k < size(); ++k) {
      const Vector xb = data_.row(k).transpose();
      const double g = innovation(x, xb, t, schedule_);
      const double gb = innovation_mean(xb, t, schedule_, dim());
      acc += std::exp(lc[k]) * (g - gb);
    }
    return -0.5 * acc / static_cast<double>(size());
  }

  /// Right-hand side of the density-weighted Poisson equation, -d rho_bar / dt.
  double poisson_rhs(const Vector& x, double t) const { return -time_derivative(x, t); }

 private:
  void check_dim(const Vector& x) const {
    if (x.size() != dim()) throw ConfigError("MixtureOracle: point dimension mismatch");
  }

  Matrix data_;
  ScheduleParams schedule_;
};

}  // namespace vpfb

#endif  // VPFB_MIXTURE_ORACLE_HPP
