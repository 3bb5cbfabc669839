#ifndef VPFB_SCHEDULE_HPP
#define VPFB_SCHEDULE_HPP

// Probability-path schedule for the log-homotopy between the Gaussian prior
// N(0, omega^2 I) and the Gaussian likelihood N(x_bar; x, nu^2 I).
//
// The homotopy coefficients follow the optimal-transport flow-matching path
//
//   alpha(t) = omega^2 / (1 - t),      beta(t) = nu^2 t / (1 - t)^2,
//
// which yields the perturbation kernel N(mu(t) x_bar, sigma(t)^2 I) with
// mu(t) = t and sigma(t) = 1 - t. Everything else (drift f, diffusion g,
// loss weight w) is derived from these.

#include <cmath>
#include <string>

#include "vpfb/error.hpp"

namespace vpfb {

/// Lower bound on sampled training times. The drift f = -mu'/mu is singular
/// at t = 0, so f and g are evaluated at max(t, kTimeFloor).
inline constexpr double kTimeFloor = 1e-4;

struct ScheduleParams {
  double omega = 1.0;        // prior standard deviation
  double nu = 1.0;           // likelihood standard deviation
  double t_max = 1.0 - 1e-5; // stationarity cutoff
  double t_end = 1.0;        // terminal training time
  double kappa = 1.5;        // loss-weight decay exponent
  double eta = 1e-4;         // Poincare regularization constant

  void validate() const {
    detail::require(omega > 0.0 && std::isfinite(omega), "schedule: omega must be > 0");
    detail::require(nu > 0.0 && std::isfinite(nu), "schedule: nu must be > 0");
    detail::require(t_max > 0.0 && t_max < 1.0, "schedule: t_max must lie in (0, 1)");
    detail::require(t_end >= t_max, "schedule: t_end must be >= t_max");
    detail::require(kappa > 1.0, "schedule: kappa must be > 1");
    detail::require(eta >= 0.0, "schedule: eta must be >= 0");
  }
};

struct ScheduleEval {
  double t = 0.0;
  double alpha = 0.0, beta = 0.0;
  double alpha_dot = 0.0, beta_dot = 0.0;
  double mu = 0.0, sigma = 0.0;
  double mu_dot = 0.0, sigma_dot = 0.0;
  double f = 0.0;     // drift coefficient, -mu'/mu
  double g_sq = 0.0;  // squared diffusion coefficient, -2 sigma (sigma' + f sigma)
  double g = 0.0;
  double w = 0.0;     // loss weight (1 - t)^kappa

  /// alpha'/omega^2 and beta'/nu^2, the coefficients of the innovation term.
  double alpha_rate = 0.0;
  double beta_rate = 0.0;
};

/// min(t, t_max). Negative times are rejected.
inline double clamp_time(double t, const ScheduleParams& p) {
  if (!(t >= 0.0)) throw ConfigError("clamp_time: negative or NaN time " + std::to_string(t));
  return t < p.t_max ? t : p.t_max;
}

namespace detail {

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct KernelMoments {
  double alpha, beta, alpha_rate, beta_rate;
  double mu, sigma, mu_dot, sigma_dot;
};

// Homotopy coefficients and kernel moments at an already clamped time s in [0, 1).
inline KernelMoments kernel_moments(double s, const ScheduleParams& p) {
  KernelMoments k{};
  const double om2 = p.omega * p.omega;
  const double nu2 = p.nu * p.nu;
  const double one_m = 1.0 - s;

  k.alpha = om2 / one_m;
  k.beta = nu2 * s / (one_m * one_m);
  k.alpha_rate = 1.0 / (one_m * one_m);
  k.beta_rate = (1.0 + s) / (one_m * one_m * one_m);

  const double A = k.alpha / om2 + k.beta / nu2;
  const double B = k.beta / nu2;
  const double A_dot = k.alpha_rate + k.beta_rate;
  const double B_dot = k.beta_rate;

  if (s > 0.0) {
    k.mu = sigmoid(std::log(k.beta / k.alpha * om2 / nu2));
    k.sigma = std::sqrt(nu2 * k.mu / k.beta);
  } else {
    k.mu = 0.0;
    k.sigma = std::sqrt(1.0 / A);
  }
  k.mu_dot = (B_dot * A - B * A_dot) / (A * A);
  k.sigma_dot = -0.5 * A_dot * k.sigma * k.sigma * k.sigma;
  return k;
}

}  // namespace detail

/// Evaluates every time-dependent scalar of the path at clamp_time(t).
///
/// The kernel moments use the logistic form mu = sgmd(log(beta/alpha * omega^2/nu^2))
/// and sigma = sqrt(nu^2 mu / beta); at t = 0 they take their analytic limits
/// mu = 0, sigma^2 = omega^2 / alpha(0). Derivatives are closed form:
/// with A = alpha/omega^2 + beta/nu^2 and B = beta/nu^2 we have mu = B/A and
/// sigma^2 = 1/A. The drift f and diffusion g are evaluated at
/// max(t, kTimeFloor) since f = -mu'/mu diverges at t = 0.
inline ScheduleEval eval_schedule(double t, const ScheduleParams& p) {
  ScheduleEval e;
  e.t = clamp_time(t, p);
  const detail::KernelMoments k = detail::kernel_moments(e.t, p);
  e.alpha = k.alpha;
  e.beta = k.beta;
  e.alpha_rate = k.alpha_rate;
  e.beta_rate = k.beta_rate;
  e.alpha_dot = k.alpha_rate * p.omega * p.omega;
  e.beta_dot = k.beta_rate * p.nu * p.nu;
  e.mu = k.mu;
  e.sigma = k.sigma;
  e.mu_dot = k.mu_dot;
  e.sigma_dot = k.sigma_dot;

  const detail::KernelMoments kf = e.t >= kTimeFloor ? k : detail::kernel_moments(kTimeFloor, p);
  e.f = -kf.mu_dot / kf.mu;
  e.g_sq = -2.0 * kf.sigma * (kf.sigma_dot + e.f * kf.sigma);
  e.g = std::sqrt(e.g_sq > 0.0 ? e.g_sq : 0.0);
  e.w = std::pow(1.0 - e.t, p.kappa);
  return e;
}

struct StationaryCoefficients {
  double f_inf = 0.0;
  double g_inf_sq = 0.0;
};

/// Drift and squared diffusion at the cutoff time t_max.
inline StationaryCoefficients stationary_coefficients(const ScheduleParams& p) {
  p.validate();
  const ScheduleEval e = eval_schedule(p.t_max, p);
  return {e.f, e.g_sq};
}

}  // namespace vpfb

#endif  // VPFB_SCHEDULE_HPP
