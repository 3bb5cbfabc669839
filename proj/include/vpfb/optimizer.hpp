#ifndef VPFB_OPTIMIZER_HPP
#define VPFB_OPTIMIZER_HPP

// First-order optimizers over a flat parameter vector.

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "vpfb/error.hpp"
#include "vpfb/perturbation.hpp"

namespace vpfb {

struct OptimizerConfig {
  std::string kind = "adam";  // adam | sgd
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double grad_clip = 0.0;  // global norm clip, 0 disables

  void validate() const {
    detail::require(kind == "adam" || kind == "sgd", "optimizer: unknown kind '" + kind + "'");
    detail::require(learning_rate >= 0.0 && std::isfinite(learning_rate), "optimizer: learning_rate must be >= 0");
    detail::require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "optimizer: betas must be in [0, 1)");
    detail::require(epsilon > 0.0, "optimizer: epsilon must be > 0");
    detail::require(grad_clip >= 0.0, "optimizer: grad_clip must be >= 0");
  }
};

/// Moment estimates carried between steps (unused by sgd except `steps`).
struct OptimizerState {
  Vector m;
  Vector v;
  long steps = 0;
};

inline OptimizerState make_optimizer_state(Eigen::Index n) { return {Vector::Zero(n), Vector::Zero(n), 0}; }

/// Applies one update in place.
inline void optimizer_step(const OptimizerConfig& cfg, OptimizerState& s, Vector& params, Vector grad) {
  detail::require(grad.size() == params.size(), "optimizer_step: gradient size mismatch");
  if (s.m.size() != params.size()) s = make_optimizer_state(params.size());
  if (cfg.grad_clip > 0.0) {
    const double norm = grad.norm();
    if (norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;
  }
  ++s.steps;
  if (cfg.kind == "sgd") {
    params -= cfg.learning_rate * grad;
    return;
  }
  s.m = cfg.beta1 * s.m + (1.0 - cfg.beta1) * grad;
  s.v = cfg.beta2 * s.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.steps));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.steps));
  params.array() -= cfg.learning_rate * (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + cfg.epsilon);
}

}  // namespace vpfb

#endif  // VPFB_OPTIMIZER_HPP
