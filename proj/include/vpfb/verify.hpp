#ifndef VPFB_VERIFY_HPP
#define VPFB_VERIFY_HPP

// Self-checks against closed-form oracles: schedule identities, the marginal
// time derivative, the flow/diffusion field identities, autodiff gradient
// checks and the 1D Poisson problem. Each check has a stable id.

#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpfb/autodiff.hpp"
#include "vpfb/energy_model.hpp"
#include "vpfb/loss.hpp"
#include "vpfb/mixture_oracle.hpp"
#include "vpfb/perturbation.hpp"
#include "vpfb/poisson1d.hpp"
#include "vpfb/schedule.hpp"

namespace vpfb {

struct CheckResult {
  std::string id;
  bool passed = false;
  double measured = 0.0;  // worst error observed
  double tolerance = 0.0;
  std::string detail;
};

struct VerifyOptions {
  /// Schedule under test. Replaceable so a corrupted schedule can be injected.
  std::function<ScheduleEval(double, const ScheduleParams&)> schedule = eval_schedule;
  bool include_poisson = true;
  std::uint64_t seed = 12345;
};

namespace detail {

inline CheckResult make_check(std::string id, double measured, double tol, std::string what) {
  CheckResult c;
  c.id = std::move(id);
  c.measured = measured;
  c.tolerance = tol;
  c.passed = std::isfinite(measured) && measured < tol;
  c.detail = std::move(what);
  return c;
}

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// A K=3 two-dimensional dataset used by several checks.
inline Matrix verify_dataset() {
  Matrix d(3, 2);
  d << 1.0, 0.5, -0.8, 0.3, 0.2, -1.1;
  return d;
}

}  // namespace detail

/// mu = t, sigma = 1 - t, f = -1/t and g = sqrt(2 (1 - t) / t) over 1000 times.
inline CheckResult check_schedule_identity(const VerifyOptions& opt) {
  const ScheduleParams p;
  double kernel = 0.0, coeff = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = 1e-4 + (p.t_max - 1e-4) * i / 999.0;
    const ScheduleEval e = opt.schedule(t, p);
    kernel = std::max({kernel, std::abs(e.mu - t), std::abs(e.sigma - (1.0 - t))});
    coeff = std::max({coeff, detail::rel_err(e.f, -1.0 / t), detail::rel_err(e.g, std::sqrt(2.0 * (1.0 - t) / t))});
  }
  // Two tolerances, so the measured value is the worst error in units of its bound.
  return detail::make_check("schedule.identity", std::max(kernel / 1e-12, coeff / 1e-10), 1.0,
                            "kernel error " + detail::sci(kernel) + ", coefficient rel error " + detail::sci(coeff));
}

/// The logistic form of the kernel mean equals B / A.
inline CheckResult check_kernel_ratio(const VerifyOptions& opt) {
  ScheduleParams p;
  p.omega = 0.7;
  p.nu = 1.3;
  double worst = 0.0;
  for (int i = 1; i < 200; ++i) {
    const double t = p.t_max * i / 200.0;
    const ScheduleEval e = opt.schedule(t, p);
    const double A = e.alpha / (p.omega * p.omega) + e.beta / (p.nu * p.nu);
    const double B = e.beta / (p.nu * p.nu);
    worst = std::max({worst, std::abs(e.mu - B / A), std::abs(e.sigma - std::sqrt(1.0 / A))});
  }
  return detail::make_check("schedule.kernel_ratio", worst, 1e-12, "max deviation from B/A form");
}

/// Closed-form d rho_bar / dt against central differences in time.
inline CheckResult check_time_derivative(const VerifyOptions& opt) {
  const ScheduleParams p;
  const MixtureOracle o(detail::verify_dataset(), p);
  const double dt = 1e-5;
  double worst = 0.0;
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < 5; ++j) {
      const double t = 0.15 + 0.15 * j;
      Vector x(2);
      x << -0.8 + 0.4 * i, 0.3 - 0.25 * i + 0.1 * j;
      const double fd = (o.density(x, t + dt) - o.density(x, t - dt)) / (2.0 * dt);
      const double exact = o.time_derivative(x, t);
      worst = std::max(worst, std::abs(fd - exact) / std::max(std::abs(exact), 1e-3));
    }
  }
  (void)opt;
  return detail::make_check("oracle.time_derivative", worst, 1e-4, "25 probes, K = 3");
}

/// Conditional field equals -f x + 1/2 g^2 grad log rho(x | x_bar).
inline CheckResult check_conditional_field(const VerifyOptions& opt) {
  const ScheduleParams p;
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.01, 0.99);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vector xb(2), eps(2);
    xb << normal(rng), normal(rng);
    eps << normal(rng), normal(rng);
    const double t = unif(rng);
    const PerturbedSample s = perturb(xb, eps, t, p);
    const ScheduleEval e = opt.schedule(t, p);
    const Vector pf = -e.f * s.x + 0.5 * e.g_sq * conditional_score(s.x, xb, t, p);
    worst = std::max(worst, (pf - s.v_cond).cwiseAbs().maxCoeff());
  }
  return detail::make_check("field.conditional", worst, 1e-10, "100 random tuples");
}

/// Posterior-weighted conditional field equals -f x + 1/2 g^2 grad log rho_bar.
inline CheckResult check_marginal_field(const VerifyOptions& opt) {
  const ScheduleParams p;
  const MixtureOracle o(detail::verify_dataset(), p);
  std::mt19937_64 rng(opt.seed + 1);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    Vector x(2);
    x << normal(rng), normal(rng);
    const double t = unif(rng);
    const ScheduleEval e = opt.schedule(t, p);
    const Vector pf = -e.f * x + 0.5 * e.g_sq * o.score(x, t);
    const Vector mf = o.marginal_field(x, t);
    worst = std::max(worst, (pf - mf).norm() / std::max(mf.norm(), 1e-12));
  }
  return detail::make_check("field.marginal", worst, 1e-8, "100 random points, K = 3");
}

/// Directional finite differences of parameter gradients for a loss that
/// contains grad_x Phi, on small random models.
inline CheckResult check_second_order_gradients(const VerifyOptions& opt) {
  std::mt19937_64 rng(opt.seed + 2);
  std::normal_distribution<double> normal;
  Architecture arch;
  arch.hidden = {6, 6};
  arch.activation = ad::Activation::tanh;
  const EnergyModel model(arch, opt.seed);
  const ScheduleParams p;
  const Eigen::Index B = 5;
  Matrix xb(B, 2), eps(B, 2);
  Vector t(B);
  for (Eigen::Index i = 0; i < B; ++i) {
    xb.row(i) << normal(rng), normal(rng);
    eps.row(i) << normal(rng), normal(rng);
    t[i] = 0.1 + 0.15 * static_cast<double>(i);
  }
  const PerturbedBatch batch = perturb_batch(xb, eps, t, p);
  LossConfig cfg;
  auto loss_at = [&](const Vector& params) {
    const EnergyModel m(arch, params);
    return batch_loss(m, batch, cfg).total;
  };
  const auto [value, grad] = model.param_grad([&](ad::Tape& tape, const BoundParams& b) {
    const FieldEvaluation f = model.field(tape, b, batch.x, batch.t, batch.labels, true);
    return build_loss(tape, f, batch, cfg).total;
  });
  (void)value;
  double worst = 0.0;
  for (int k = 0; k < 8; ++k) {
    Vector d(grad.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) d[i] = normal(rng);
    d.normalize();
    const double h = 1e-5;
    const double fd = (loss_at(model.params() + h * d) - loss_at(model.params() - h * d)) / (2.0 * h);
    const double an = grad.dot(d);
    worst = std::max(worst, std::abs(fd - an) / std::max(std::abs(an), 1e-6));
  }
  return detail::make_check("autodiff.second_order", worst, 1e-4, "8 directions, full loss");
}

/// Ritz minimizer on a grid against direct integration of the Poisson equation.
inline CheckResult check_poisson_1d(const VerifyOptions&) {
  Matrix d(3, 1);
  d << -1.0, 0.5, 2.0;
  const MixtureOracle o(d, ScheduleParams{});
  const double t = 0.5;
  const Vector nodes = uniform_nodes(-6.0, 6.0, 501);
  const Vector fd = poisson_gradient_fd(o, t, nodes);
  const RitzGridSolution ritz = minimize_ritz_on_grid(o, t, nodes);
  Vector fd_mid(ritz.midpoints.size());
  for (Eigen::Index j = 0; j < fd_mid.size(); ++j) fd_mid[j] = 0.5 * (fd[j] + fd[j + 1]);
  const double err = relative_l2_on(ritz.midpoints, ritz.gradient, fd_mid, 0.0, 4.8);
  return detail::make_check("poisson1d.ritz", err, 5e-2, "relative L2 error on the central 80%");
}

inline std::vector<CheckResult> run_verification(const VerifyOptions& opt = {}) {
  std::vector<CheckResult> out;
  auto guarded = [&](const char* id, auto fn) {
    try {
      out.push_back(fn(opt));
    } catch (const std::exception& e) {
      CheckResult c;
      c.id = id;
      c.detail = std::string("exception: ") + e.what();
      out.push_back(c);
    }
  };
  guarded("schedule.identity", check_schedule_identity);
  guarded("schedule.kernel_ratio", check_kernel_ratio);
  guarded("oracle.time_derivative", check_time_derivative);
  guarded("field.conditional", check_conditional_field);
  guarded("field.marginal", check_marginal_field);
  guarded("autodiff.second_order", check_second_order_gradients);
  if (opt.include_poisson) guarded("poisson1d.ritz", check_poisson_1d);
  return out;
}

}  // namespace vpfb

#endif  // VPFB_VERIFY_HPP
