#ifndef VPFB_LOSS_HPP
#define VPFB_LOSS_HPP

// Training objective for the potential Phi.
//
//   total = Cov[Phi(x, t), w(t) (gamma - gamma_bar)]     covariance (Ritz) term
//         + mean(-cos(grad_x Phi, v_cond))                alignment term
//         + mean(|grad_x Phi|^2) + mean(|dPhi/dt|^2)      gradient norms
//         + eta mean(Phi^2)                               Poincare term
//
// Each term can be switched off to reproduce the loss ablations (A)-(E).
// All terms are built as tape nodes so the total can be differentiated by
// the model parameters.

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "vpfb/autodiff.hpp"
#include "vpfb/energy_model.hpp"
#include "vpfb/error.hpp"
#include "vpfb/perturbation.hpp"
#include "vpfb/schedule.hpp"

namespace vpfb {

enum class Alignment : std::uint8_t { cosine, inner_product, none };
enum class Objective : std::uint8_t { potential_flow, flow_matching };

inline std::string to_string(Alignment a) {
  switch (a) {
    case Alignment::cosine: return "cosine";
    case Alignment::inner_product: return "inner_product";
    case Alignment::none: return "none";
  }
  return "?";
}

inline Alignment alignment_from_string(const std::string& s) {
  if (s == "cosine") return Alignment::cosine;
  if (s == "inner_product") return Alignment::inner_product;
  if (s == "none") return Alignment::none;
  throw ConfigError("unknown alignment '" + s + "'");
}

inline std::string to_string(Objective o) { return o == Objective::potential_flow ? "potential_flow" : "flow_matching"; }

inline Objective objective_from_string(const std::string& s) {
  if (s == "potential_flow") return Objective::potential_flow;
  if (s == "flow_matching") return Objective::flow_matching;
  throw ConfigError("unknown objective '" + s + "'");
}

struct LossConfig {
  Objective objective = Objective::potential_flow;
  bool use_covariance = true;
  Alignment alignment = Alignment::cosine;
  bool use_poincare = true;
  double eta = 1e-4;
  double kappa = 1.5;
  double eps_norm = 1e-8;
  /// Covary Phi with gamma - gamma_bar instead of raw gamma. Within a batch
  /// of mixed times this removes cross-time terms, so each time slice sees
  /// its own Poisson equation.
  bool center_innovation = true;

  void validate() const {
    detail::require(eps_norm > 0.0, "loss: eps_norm must be > 0");
    detail::require(eta >= 0.0, "loss: eta must be >= 0");
    detail::require(kappa > 1.0, "loss: kappa must be > 1");
  }

  /// Named ablation presets:
  /// A full loss, B without covariance, C without alignment,
  /// D inner product instead of cosine, E flow matching.
  static LossConfig preset(char id) {
    LossConfig c;
    switch (id) {
      case 'A': break;
      case 'B': c.use_covariance = false; break;
      case 'C': c.alignment = Alignment::none; break;
      case 'D': c.alignment = Alignment::inner_product; break;
      case 'E': c.objective = Objective::flow_matching; break;
      default: throw ConfigError(std::string("unknown loss preset '") + id + "'");
    }
    return c;
  }
};

struct LossBreakdown {
  double covariance_term = 0.0;
  double alignment_term = 0.0;
  double grad_norm_term = 0.0;
  double time_grad_term = 0.0;
  double poincare_term = 0.0;
  double total = 0.0;

  bool finite() const {
    return std::isfinite(covariance_term) && std::isfinite(alignment_term) && std::isfinite(grad_norm_term) &&
           std::isfinite(time_grad_term) && std::isfinite(poincare_term) && std::isfinite(total);
  }

  /// Name of the first non-finite term, or empty.
  std::string first_non_finite() const {
    if (!std::isfinite(covariance_term)) return "covariance_term";
    if (!std::isfinite(alignment_term)) return "alignment_term";
    if (!std::isfinite(grad_norm_term)) return "grad_norm_term";
    if (!std::isfinite(time_grad_term)) return "time_grad_term";
    if (!std::isfinite(poincare_term)) return "poincare_term";
    if (!std::isfinite(total)) return "total";
    return {};
  }
};

/// Loss terms as tape nodes. Inactive terms are constant zeros.
struct LossGraph {
  ad::Var covariance, alignment, grad_norm, time_grad, poincare, total;

  LossBreakdown values() const {
    return {covariance.scalar(), alignment.scalar(), grad_norm.scalar(), time_grad.scalar(), poincare.scalar(),
            total.scalar()};
  }
};

namespace detail {

/// Sum_i q_i a_i b_i - (sum_i q_i a_i)(sum_i q_i b_i) with q summing to one,
/// or the unbiased sample covariance when no weights are given.
/// `b` is a constant column.
inline ad::Var covariance(ad::Tape& tape, ad::Var a, const Vector& b, const std::optional<Vector>& weights) {
  const Eigen::Index B = a.rows();
  if (!weights) {
    detail::require(B >= 2, "covariance needs a batch of at least 2");
    const Vector bc = b.array() - b.mean();
    ad::Var ac = a - ad::broadcast_rows(ad::mean(a), B);
    return (1.0 / static_cast<double>(B - 1)) * ad::sum(ac * tape.constant(bc));
  }
  detail::require(weights->size() == B, "covariance: one weight per sample required");
  const Vector q = *weights / weights->sum();
  const Vector bc = b.array() - q.dot(b);
  return ad::sum(a * tape.constant(q.cwiseProduct(bc)));
}

inline ad::Var weighted_mean(ad::Tape& tape, ad::Var a, const std::optional<Vector>& weights) {
  if (!weights) return ad::mean(a);
  const Vector q = *weights / weights->sum();
  return ad::sum(a * tape.constant(q));
}

inline void check_batch(const FieldEvaluation& f, const PerturbedBatch& batch) {
  require(batch.size() >= 2, "loss: batch size must be >= 2, got " + std::to_string(batch.size()));
  require(f.phi.rows() == batch.size() && f.phi.cols() == 1, "loss: Phi must be B x 1");
  require(f.grad_x.rows() == batch.size() && f.grad_x.cols() == batch.dim(), "loss: grad_x must be B x n");
}

}  // namespace detail

/// Innovation weights used by the covariance term: w(t_i) (gamma_i - gamma_bar_i).
inline Vector weighted_innovation(const PerturbedBatch& batch, const LossConfig& cfg) {
  Vector c(batch.size());
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    const double w = std::pow(1.0 - batch.t[i], cfg.kappa);
    c[i] = w * (cfg.center_innovation ? batch.gamma[i] - batch.gamma_bar[i] : batch.gamma[i]);
  }
  return c;
}

/// mean |grad_x Phi - v_cond|^2
inline ad::Var flow_matching_loss(ad::Tape& tape, const FieldEvaluation& f, const PerturbedBatch& batch) {
  detail::check_batch(f, batch);
  ad::Var r = f.grad_x - tape.constant(batch.v_cond);
  return ad::mean(ad::sum_cols(r * r));
}

/// Builds every loss term for one batch.
inline LossGraph build_loss(ad::Tape& tape, const FieldEvaluation& f, const PerturbedBatch& batch,
                            const LossConfig& cfg) {
  cfg.validate();
  detail::check_batch(f, batch);
  LossGraph g;
  ad::Var zero = tape.scalar_constant(0.0);
  g.covariance = g.alignment = g.grad_norm = g.time_grad = g.poincare = zero;

  if (cfg.objective == Objective::flow_matching) {
    g.total = flow_matching_loss(tape, f, batch);
    return g;
  }

  if (cfg.use_covariance) g.covariance = detail::covariance(tape, f.phi, weighted_innovation(batch, cfg), std::nullopt);

  if (cfg.alignment != Alignment::none) {
    ad::Var dot = ad::row_dot(f.grad_x, tape.constant(batch.v_cond));
    if (cfg.alignment == Alignment::cosine) {
      const Vector inv_v = (batch.v_cond.rowwise().norm().array() + cfg.eps_norm).inverse();
      ad::Var inv_g = ad::reciprocal(ad::row_norm(f.grad_x) + cfg.eps_norm);
      g.alignment = -ad::mean(dot * inv_g * tape.constant(inv_v));
    } else {
      g.alignment = -ad::mean(dot);
    }
  }

  g.grad_norm = ad::mean(ad::sum_cols(ad::square(f.grad_x)));
  g.time_grad = ad::mean(ad::square(f.grad_t));
  if (cfg.use_poincare) g.poincare = cfg.eta * ad::mean(ad::square(f.phi));

  g.total = g.covariance + g.alignment + g.grad_norm + g.time_grad + g.poincare;
  return g;
}

/// Covariance of Phi with the unweighted innovation plus mean |grad_x Phi|^2.
/// This is the plain Ritz energy of the density-weighted Poisson equation at
/// one time. With `weights`, expectations become weighted sums (quadrature).
inline ad::Var ritz_core_loss(ad::Tape& tape, const FieldEvaluation& f, const PerturbedBatch& batch,
                              bool center_innovation = true, const std::optional<Vector>& weights = std::nullopt) {
  detail::require(f.phi.rows() == batch.size() && f.grad_x.rows() == batch.size(), "ritz_core_loss: shape mismatch");
  const Vector c = center_innovation ? Vector(batch.gamma - batch.gamma_bar) : batch.gamma;
  return detail::covariance(tape, f.phi, c, weights) +
         detail::weighted_mean(tape, ad::sum_cols(ad::square(f.grad_x)), weights);
}

// Model-level conveniences.

inline LossBreakdown batch_loss(const EnergyModel& m, const PerturbedBatch& batch, const LossConfig& cfg) {
  ad::Tape tape;
  const BoundParams b = m.bind(tape, false);
  const FieldEvaluation f = m.field(tape, b, batch.x, batch.t, batch.labels, true);
  return build_loss(tape, f, batch, cfg).values();
}

/// Loss breakdown plus the flat parameter gradient of the total.
inline std::pair<LossBreakdown, Vector> loss_and_grad(const EnergyModel& m, const PerturbedBatch& batch,
                                                      const LossConfig& cfg) {
  LossBreakdown out;
  auto result = m.param_grad([&](ad::Tape& tape, const BoundParams& b) {
    const FieldEvaluation f = m.field(tape, b, batch.x, batch.t, batch.labels, true);
    LossGraph g = build_loss(tape, f, batch, cfg);
    out = g.values();
    return g.total;
  });
  return {out, std::move(result.second)};
}

inline double flow_matching_loss(const EnergyModel& m, const PerturbedBatch& batch) {
  ad::Tape tape;
  const BoundParams b = m.bind(tape, false);
  const FieldEvaluation f = m.field(tape, b, batch.x, batch.t, batch.labels, false);
  return flow_matching_loss(tape, f, batch).scalar();
}

inline double ritz_core_loss(const EnergyModel& m, const PerturbedBatch& batch, const ScheduleParams& p) {
  p.validate();
  for (Eigen::Index i = 1; i < batch.size(); ++i) {
    detail::require(batch.t[i] == batch.t[0], "ritz_core_loss: batch must share one time");
  }
  ad::Tape tape;
  const BoundParams b = m.bind(tape, false);
  const FieldEvaluation f = m.field(tape, b, batch.x, batch.t, batch.labels, false);
  return ritz_core_loss(tape, f, batch).scalar();
}

}  // namespace vpfb

#endif  // VPFB_LOSS_HPP
