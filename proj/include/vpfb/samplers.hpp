#ifndef VPFB_SAMPLERS_HPP
#define VPFB_SAMPLERS_HPP

// Deterministic potential-flow sampling and Langevin sampling on the
// stationary Boltzmann energy.
//
// Samplers are templates over a potential type P providing
//
//   Vector energy(const Matrix& X, double t) const;   // B values
//   Matrix grad(const Matrix& X, double t) const;     // B x n
//
// with points as rows. ModelPotential adapts a trained EnergyModel.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "vpfb/energy_model.hpp"
#include "vpfb/error.hpp"
#include "vpfb/perturbation.hpp"
#include "vpfb/schedule.hpp"

namespace vpfb {

template <class P>
concept Potential = requires(const P& p, const Matrix& X, double t) {
  { p.energy(X, t) } -> std::convertible_to<Vector>;
  { p.grad(X, t) } -> std::convertible_to<Matrix>;
};

/// A trained model seen as a potential. Time is clamped at t_max. With a
/// class list, the energy is the mean of the per-class energies, which
/// composes the selected classes.
class ModelPotential {
 public:
  ModelPotential(const EnergyModel& model, const ScheduleParams& schedule, std::vector<int> classes = {})
      : model_(&model), schedule_(schedule), classes_(std::move(classes)) {
    if (model.conditional()) {
      detail::require(!classes_.empty(), "ModelPotential: a conditional model needs at least one class");
    } else {
      detail::require(classes_.empty(), "ModelPotential: classes given for an unconditional model");
    }
  }

  Vector energy(const Matrix& X, double t) const {
    const Vector T = Vector::Constant(X.rows(), clamp_time(t, schedule_));
    if (classes_.empty()) return model_->energies(X, T);
    Vector e = Vector::Zero(X.rows());
    for (int c : classes_) e += model_->energies(X, T, EnergyModel::label_list(X.rows(), c));
    return e / static_cast<double>(classes_.size());
  }

  Matrix grad(const Matrix& X, double t) const {
    const Vector T = Vector::Constant(X.rows(), clamp_time(t, schedule_));
    if (classes_.empty()) return model_->grad_x(X, T);
    Matrix g = Matrix::Zero(X.rows(), X.cols());
    for (int c : classes_) g += model_->grad_x(X, T, EnergyModel::label_list(X.rows(), c));
    return g / static_cast<double>(classes_.size());
  }

  const ScheduleParams& schedule() const { return schedule_; }

 private:
  const EnergyModel* model_;
  ScheduleParams schedule_;
  std::vector<int> classes_;
};

enum class OdeMethod : std::uint8_t { euler, rk4, adaptive_rk45 };

inline std::string to_string(OdeMethod m) {
  switch (m) {
    case OdeMethod::euler: return "euler";
    case OdeMethod::rk4: return "rk4";
    case OdeMethod::adaptive_rk45: return "adaptive_rk45";
  }
  return "?";
}

inline OdeMethod ode_method_from_string(const std::string& s) {
  if (s == "euler") return OdeMethod::euler;
  if (s == "rk4") return OdeMethod::rk4;
  if (s == "adaptive_rk45" || s == "rk45") return OdeMethod::adaptive_rk45;
  throw ConfigError("unknown ODE method '" + s + "'");
}

struct OdeConfig {
  OdeMethod method = OdeMethod::adaptive_rk45;
  double t_start = 0.0;
  double horizon = 1.575;  // integration end time
  int steps = 200;         // fixed-step methods
  double rtol = 1e-5;
  double atol = 1e-6;
  double min_step = 1e-10;
  int max_steps = 100000;
  bool record_trajectory = false;

  void validate() const {
    detail::require(t_start >= 0.0, "ode: t_start must be >= 0");
    detail::require(horizon > t_start, "ode: horizon must exceed t_start");
    detail::require(steps >= 1, "ode: steps must be >= 1");
    detail::require(rtol > 0.0 && atol > 0.0, "ode: tolerances must be > 0");
    detail::require(min_step > 0.0 && max_steps >= 1, "ode: invalid step limits");
  }
};

struct FlowResult {
  Matrix samples;
  std::vector<double> times;       // recorded states, if requested
  std::vector<Matrix> trajectory;
  int accepted_steps = 0;
  int rejected_steps = 0;
};

namespace detail {

inline double max_abs(const Matrix& X) { return X.size() ? X.cwiseAbs().maxCoeff() : 0.0; }

}  // namespace detail

/// Integrates dx/dt = grad_x Phi(x, t) from t_start to the horizon for every
/// row of `x0`. The whole batch is one system; the adaptive solver controls
/// the RMS error over all coordinates.
template <Potential P>
FlowResult flow_sample(const P& potential, const Matrix& x0, const OdeConfig& cfg) {
  cfg.validate();
  FlowResult r;
  Matrix x = x0;
  double t = cfg.t_start;
  auto record = [&] {
    if (!cfg.record_trajectory) return;
    r.times.push_back(t);
    r.trajectory.push_back(x);
  };
  auto check_finite = [&](const Matrix& y) {
    if (!y.allFinite()) throw NumericError("flow_sample: non-finite state at t=" + std::to_string(t));
  };
  record();

  if (cfg.method != OdeMethod::adaptive_rk45) {
    const double h = (cfg.horizon - cfg.t_start) / cfg.steps;
    for (int s = 0; s < cfg.steps; ++s) {
      t = cfg.t_start + s * h;
      if (cfg.method == OdeMethod::euler) {
        x += h * potential.grad(x, t);
      } else {
        const Matrix k1 = potential.grad(x, t);
        const Matrix k2 = potential.grad(x + 0.5 * h * k1, t + 0.5 * h);
        const Matrix k3 = potential.grad(x + 0.5 * h * k2, t + 0.5 * h);
        const Matrix k4 = potential.grad(x + h * k3, t + h);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      }
      t = cfg.t_start + (s + 1) * h;
      check_finite(x);
      ++r.accepted_steps;
      record();
    }
    r.samples = std::move(x);
    return r;
  }

  // Dormand-Prince 5(4) with first-same-as-last and PI step control.
  constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
  constexpr double a21 = 1.0 / 5;
  constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
  constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                   a65 = -5103.0 / 18656;
  constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                   e6 = 22.0 / 525, e7 = -1.0 / 40;
  constexpr double safety = 0.9, min_factor = 0.2, max_factor = 5.0;
  constexpr double alpha = 0.7 / 5.0, beta = 0.4 / 5.0;

  const double span = cfg.horizon - cfg.t_start;
  auto error_scale = [&](const Matrix& a, const Matrix& b) {
    return (cfg.atol + cfg.rtol * a.cwiseAbs().cwiseMax(b.cwiseAbs()).array()).matrix();
  };

  Matrix k1 = potential.grad(x, t);
  // Initial step from the size of the state and its derivative.
  double h;
  {
    const Matrix sc = error_scale(x, x);
    const double d0 = std::sqrt((x.array() / sc.array()).square().mean());
    const double d1 = std::sqrt((k1.array() / sc.array()).square().mean());
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min({h, span, 0.1 * span});
    h = std::max(h, cfg.min_step);
  }
  double err_prev = 1e-4;
  int total = 0;
  while (t < cfg.horizon) {
    if (++total > cfg.max_steps) {
      throw NumericError("flow_sample: exceeded " + std::to_string(cfg.max_steps) + " steps at t=" + std::to_string(t));
    }
    const bool last = t + h >= cfg.horizon;
    if (last) h = cfg.horizon - t;
    const Matrix k2 = potential.grad(x + h * (a21 * k1), t + c2 * h);
    const Matrix k3 = potential.grad(x + h * (a31 * k1 + a32 * k2), t + c3 * h);
    const Matrix k4 = potential.grad(x + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h);
    const Matrix k5 = potential.grad(x + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h);
    const Matrix k6 = potential.grad(x + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t + h);
    const Matrix y = x + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    const Matrix k7 = potential.grad(y, t + h);
    const Matrix err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
    const double en = std::sqrt((err.array() / error_scale(x, y).array()).square().mean());
    if (!std::isfinite(en)) {
      throw NumericError("flow_sample: non-finite error estimate at t=" + std::to_string(t) +
                         ", max |x| = " + std::to_string(detail::max_abs(x)));
    }
    if (en <= 1.0) {
      t = last ? cfg.horizon : t + h;
      x = y;
      k1 = k7;
      ++r.accepted_steps;
      record();
      const double factor =
          en == 0.0 ? max_factor
                    : std::clamp(safety * std::pow(en, -alpha) * std::pow(err_prev, beta), min_factor, max_factor);
      err_prev = std::max(en, 1e-4);
      h *= factor;
    } else {
      ++r.rejected_steps;
      h *= std::max(min_factor, safety * std::pow(en, -alpha));
    }
    if (h < cfg.min_step && t < cfg.horizon) {
      throw NumericError("flow_sample: step size underflow (h=" + std::to_string(h) + ") at t=" + std::to_string(t) +
                         ", max |x| = " + std::to_string(detail::max_abs(x)));
    }
  }
  r.samples = std::move(x);
  return r;
}

/// Stationary energy built from the potential at the cutoff time:
///   Phi_B(x) = (4 Phi(x, t_max) + f_inf |x|^2) / g_inf^2
template <Potential P>
class BoltzmannEnergy {
 public:
  BoltzmannEnergy(P potential, const ScheduleParams& schedule)
      : potential_(std::move(potential)), t_max_(schedule.t_max), coeff_(stationary_coefficients(schedule)) {}

  BoltzmannEnergy(P potential, double t_max, StationaryCoefficients coeff)
      : potential_(std::move(potential)), t_max_(t_max), coeff_(coeff) {
    detail::require(coeff.g_inf_sq > 0.0, "BoltzmannEnergy: g_inf^2 must be > 0");
  }

  Vector energy(const Matrix& X) const {
    return (4.0 * potential_.energy(X, t_max_) + coeff_.f_inf * X.rowwise().squaredNorm()) / coeff_.g_inf_sq;
  }

  /// (4 grad Phi + 2 f_inf x) / g_inf^2
  Matrix grad(const Matrix& X) const {
    return (4.0 * potential_.grad(X, t_max_) + 2.0 * coeff_.f_inf * X) / coeff_.g_inf_sq;
  }

  // Time-independent view so the energy can drive the ODE sampler as well.
  Vector energy(const Matrix& X, double) const { return energy(X); }
  Matrix grad(const Matrix& X, double) const { return grad(X); }

  const StationaryCoefficients& coefficients() const { return coeff_; }
  double t_max() const { return t_max_; }
  const P& potential() const { return potential_; }

 private:
  P potential_;
  double t_max_;
  StationaryCoefficients coeff_;
};

struct SgldConfig {
  double step_size = 1e-7;  // Delta_t
  int steps = 5000;
  double lambda = 0.35;     // noise standard deviation scale
  double divergence_radius = 1e3;
  std::uint64_t seed = 0;
  bool record_samples = false;
  int record_every = 100;

  void validate() const {
    detail::require(step_size > 0.0, "sgld: step_size must be > 0");
    detail::require(steps >= 1, "sgld: steps must be >= 1");
    detail::require(lambda > 0.0, "sgld: lambda must be > 0");
    detail::require(divergence_radius > 0.0, "sgld: divergence_radius must be > 0");
    detail::require(record_every >= 1, "sgld: record_every must be >= 1");
  }
};

struct SgldResult {
  Matrix samples;
  std::vector<double> grad_norm_mean;    // per step, mean |grad Phi_B|^2 over chains
  std::vector<double> energy_norm_mean;  // per step, mean Phi_B^2 over chains
  std::vector<int> recorded_steps;
  std::vector<Matrix> recorded;
};

/// Langevin chains x <- x + Delta grad Phi_B(x) + sqrt(2 Delta) eps, eps ~ N(0, lambda^2 I).
/// Each row of `init` is one chain with its own noise stream.
template <class E>
SgldResult sgld_sample(const E& energy, const Matrix& init, const SgldConfig& cfg) {
  cfg.validate();
  const Eigen::Index C = init.rows();
  const Eigen::Index n = init.cols();
  std::vector<std::mt19937_64> rngs;
  rngs.reserve(static_cast<std::size_t>(C));
  for (Eigen::Index c = 0; c < C; ++c) {
    std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(c)};
    rngs.emplace_back(seq);
  }
  // One distribution per chain: normal_distribution caches draws between calls.
  std::vector<std::normal_distribution<double>> normals(static_cast<std::size_t>(C),
                                                        std::normal_distribution<double>(0.0, cfg.lambda));
  const double noise_scale = std::sqrt(2.0 * cfg.step_size);

  SgldResult r;
  r.grad_norm_mean.reserve(static_cast<std::size_t>(cfg.steps));
  r.energy_norm_mean.reserve(static_cast<std::size_t>(cfg.steps));
  Matrix x = init;
  for (int s = 0; s < cfg.steps; ++s) {
    const Matrix g = energy.grad(x);
    r.grad_norm_mean.push_back(g.rowwise().squaredNorm().mean());
    r.energy_norm_mean.push_back(energy.energy(x).squaredNorm() / static_cast<double>(C));
    x += cfg.step_size * g;
    for (Eigen::Index c = 0; c < C; ++c) {
      auto& rng = rngs[static_cast<std::size_t>(c)];
      auto& normal = normals[static_cast<std::size_t>(c)];
      for (Eigen::Index j = 0; j < n; ++j) x(c, j) += noise_scale * normal(rng);
    }
    const Vector radii = x.rowwise().norm();
    Eigen::Index worst = 0;
    const double rmax = radii.size() ? radii.maxCoeff(&worst) : 0.0;
    if (!std::isfinite(rmax) || rmax > cfg.divergence_radius) {
      throw NumericError("sgld_sample: chain " + std::to_string(worst) + " diverged at step " + std::to_string(s) +
                         " (|x| = " + std::to_string(rmax) + ")");
    }
    if (cfg.record_samples && (s + 1) % cfg.record_every == 0) {
      r.recorded_steps.push_back(s + 1);
      r.recorded.push_back(x);
    }
  }
  r.samples = std::move(x);
  return r;
}

}  // namespace vpfb

#endif  // VPFB_SAMPLERS_HPP
