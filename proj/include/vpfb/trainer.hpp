#ifndef VPFB_TRAINER_HPP
#define VPFB_TRAINER_HPP

// Training loop: sample data, times and noise, build the perturbed batch,
// evaluate the loss and take one optimizer step.
//
// The random stream of step k is seeded from (seed, k), so a run resumed
// from a checkpoint continues exactly as the uninterrupted run would.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpfb/autodiff.hpp"
#include "vpfb/checkpoint.hpp"
#include "vpfb/csv.hpp"
#include "vpfb/data.hpp"
#include "vpfb/energy_model.hpp"
#include "vpfb/error.hpp"
#include "vpfb/eval.hpp"
#include "vpfb/loss.hpp"
#include "vpfb/optimizer.hpp"
#include "vpfb/perturbation.hpp"
#include "vpfb/samplers.hpp"
#include "vpfb/schedule.hpp"

namespace vpfb {

struct TrainConfig {
  DatasetSpec dataset;
  Architecture arch;
  ScheduleParams schedule;
  LossConfig loss;
  OptimizerConfig optimizer;
  int batch_size = 256;
  int iterations = 20000;
  std::uint64_t seed = 0;       // batch sampling
  std::uint64_t model_seed = 0; // parameter initialization

  std::filesystem::path out_dir;  // empty: keep everything in memory
  int checkpoint_every = 1000;
  int log_every = 10;
  int eval_every = 1000;   // 0 disables held-out evaluation
  int eval_samples = 1024;
  OdeConfig eval_ode{OdeMethod::rk4, 0.0, 1.575, 40};

  void validate() const {
    dataset.validate();
    arch.validate();
    schedule.validate();
    loss.validate();
    optimizer.validate();
    detail::require(batch_size >= 2, "train: batch_size must be >= 2");
    detail::require(iterations >= 1, "train: iterations must be >= 1");
    detail::require(optimizer.learning_rate > 0.0, "train: learning_rate must be > 0");
    detail::require(checkpoint_every >= 1, "train: checkpoint_every must be >= 1");
    detail::require(log_every >= 1, "train: log_every must be >= 1");
    detail::require(eval_every >= 0, "train: eval_every must be >= 0");
    detail::require(eval_samples >= 2, "train: eval_samples must be >= 2");
    detail::require(arch.input_dim == 2, "train: datasets are two-dimensional");
    detail::require(arch.num_classes == 0 || arch.num_classes == dataset.num_classes(),
                    "train: num_classes must match the dataset's label count");
    eval_ode.validate();
  }
};

struct TrainState {
  EnergyModel model;
  OptimizerState optimizer;
  long step = 0;
  double best_metric = std::numeric_limits<double>::infinity();
  long best_step = -1;
  EnergyModel best_model;
};

struct StepRecord {
  long step = 0;
  LossBreakdown loss;
  double poincare_ratio = std::numeric_limits<double>::quiet_NaN();
  double wall_time = 0.0;
};

inline TrainState initial_state(const TrainConfig& cfg) {
  TrainState s;
  s.model = EnergyModel(cfg.arch, cfg.model_seed);
  s.optimizer = make_optimizer_state(s.model.params().size());
  s.best_model = s.model;
  return s;
}

/// The perturbed batch used at `step`; a pure function of (seed, step, data).
inline PerturbedBatch sample_batch(const TrainConfig& cfg, long step, const LabelledPoints& data) {
  std::seed_seq seq{cfg.seed, static_cast<std::uint64_t>(step)};
  std::mt19937_64 rng(seq);
  const Eigen::Index N = data.points.rows();
  const Eigen::Index n = data.points.cols();
  const Eigen::Index B = cfg.batch_size;
  std::uniform_int_distribution<Eigen::Index> pick(0, N - 1);
  std::uniform_real_distribution<double> time(0.0, cfg.schedule.t_end);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x_bar(B, n), eps(B, n);
  Vector t(B);
  std::vector<int> labels;
  const bool conditional = cfg.arch.num_classes > 0;
  for (Eigen::Index i = 0; i < B; ++i) {
    const Eigen::Index k = pick(rng);
    x_bar.row(i) = data.points.row(k);
    if (conditional) labels.push_back(data.labels[static_cast<std::size_t>(k)]);
    t[i] = clamp_time(time(rng), cfg.schedule);
    for (Eigen::Index j = 0; j < n; ++j) eps(i, j) = normal(rng);
  }
  return perturb_batch(x_bar, eps, t, cfg.schedule, std::move(labels));
}

/// One optimizer update. Throws NumericError naming the first non-finite term.
inline StepRecord train_step(TrainState& s, const TrainConfig& cfg, const LabelledPoints& data) {
  const PerturbedBatch batch = sample_batch(cfg, s.step, data);
  // The schedule owns kappa and eta.
  LossConfig loss_cfg = cfg.loss;
  loss_cfg.kappa = cfg.schedule.kappa;
  loss_cfg.eta = cfg.schedule.eta;
  StepRecord rec;
  double phi_sq = 0.0;
  auto [total, grad] = s.model.param_grad([&](ad::Tape& tape, const BoundParams& b) {
    const FieldEvaluation f = s.model.field(tape, b, batch.x, batch.t, batch.labels, true);
    const LossGraph g = build_loss(tape, f, batch, loss_cfg);
    rec.loss = g.values();
    phi_sq = f.phi.value().squaredNorm() / static_cast<double>(batch.size());
    if (cfg.loss.objective == Objective::flow_matching) {
      rec.loss.grad_norm_term = f.grad_x.value().rowwise().squaredNorm().mean();
    }
    return g.total;
  });
  if (!rec.loss.finite() || !std::isfinite(total)) {
    throw NumericError("train_step " + std::to_string(s.step) + ": non-finite " + rec.loss.first_non_finite());
  }
  if (!grad.allFinite()) throw NumericError("train_step " + std::to_string(s.step) + ": non-finite parameter gradient");
  if (phi_sq > 1e-12) rec.poincare_ratio = rec.loss.grad_norm_term / phi_sq;
  optimizer_step(cfg.optimizer, s.optimizer, s.model.params(), std::move(grad));
  ++s.step;
  rec.step = s.step;
  return rec;
}

/// Energy distance between ODE samples and held-out points, on fixed
/// prior draws so successive evaluations are comparable.
inline double heldout_energy_distance(const EnergyModel& model, const TrainConfig& cfg, const Matrix& heldout) {
  const Eigen::Index m = std::min<Eigen::Index>(cfg.eval_samples, heldout.rows());
  const Matrix prior = prior_sample(2, m, cfg.schedule.omega, cfg.seed ^ 0x5eedULL);
  // Conditional models compose all classes for a label-free comparison.
  std::vector<int> classes;
  for (int c = 0; c < cfg.arch.num_classes; ++c) classes.push_back(c);
  const ModelPotential pot(model, cfg.schedule, classes);
  return energy_distance(flow_sample(pot, prior, cfg.eval_ode).samples, heldout.topRows(m));
}

inline Checkpoint make_checkpoint(const TrainState& s, const TrainConfig& cfg, const EnergyModel& model) {
  Checkpoint ck;
  ck.model = model;
  ck.schedule = cfg.schedule;
  ck.dataset = cfg.dataset;
  ck.step = s.step;
  ck.optimizer = s.optimizer;
  ck.best_metric = s.best_metric;
  ck.best_step = s.best_step;
  return ck;
}

inline TrainState state_from_checkpoint(const Checkpoint& ck, const TrainConfig& cfg) {
  detail::require(ck.model.arch() == cfg.arch, "resume: checkpoint architecture differs from the config");
  TrainState s;
  s.model = ck.model;
  s.optimizer = ck.optimizer;
  s.step = ck.step;
  s.best_metric = ck.best_metric;
  s.best_step = ck.best_step;
  s.best_model = ck.model;
  return s;
}

struct FitResult {
  TrainState state;
  std::vector<StepRecord> log;
  std::vector<std::pair<long, double>> evals;  // (step, held-out energy distance)
};

using StepObserver = std::function<void(const StepRecord&)>;

inline std::string checkpoint_name(long step) {
  std::ostringstream os;
  os << "step_" << std::setw(6) << std::setfill('0') << step << ".json";
  return os.str();
}

/// Runs training to cfg.iterations. With `resume`, continues from that state.
/// When out_dir is set, writes metrics.csv, eval.csv, checkpoints/step_N.json
/// at the checkpoint cadence and on the last step, final.json and best.json.
inline FitResult fit(const TrainConfig& cfg, std::optional<TrainState> resume = std::nullopt,
                     const StepObserver& observer = {}) {
  cfg.validate();
  const DatasetSplit data = generate(cfg.dataset);
  FitResult out;
  out.state = resume ? std::move(*resume) : initial_state(cfg);
  TrainState& s = out.state;
  detail::require(s.step <= cfg.iterations, "fit: resumed state is beyond the iteration budget");

  const bool persist = !cfg.out_dir.empty();
  const std::vector<std::string> metric_cols{"step",      "total",    "covariance_term", "alignment_term",
                                             "grad_norm_term", "time_grad_term", "poincare_term", "poincare_ratio",
                                             "wall_time"};
  std::optional<CsvWriter> metrics, evals;
  if (persist) {
    const bool append = s.step > 0;
    metrics.emplace(cfg.out_dir / "metrics.csv", metric_cols, append);
    evals.emplace(cfg.out_dir / "eval.csv", std::vector<std::string>{"step", "energy_distance"}, append);
  }
  const auto t0 = std::chrono::steady_clock::now();

  auto evaluate = [&] {
    const double ed = heldout_energy_distance(s.model, cfg, data.test.points);
    out.evals.emplace_back(s.step, ed);
    if (evals) {
      evals->row({static_cast<double>(s.step), ed});
      evals->flush();
    }
    if (ed < s.best_metric) {
      s.best_metric = ed;
      s.best_step = s.step;
      s.best_model = s.model;
      if (persist) save_checkpoint(cfg.out_dir / "best.json", make_checkpoint(s, cfg, s.model));
    }
  };

  while (s.step < cfg.iterations) {
    StepRecord rec = train_step(s, cfg, data.train);
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool last = s.step == cfg.iterations;
    if (s.step % cfg.log_every == 0 || last || s.step == 1) {
      out.log.push_back(rec);
      if (metrics) {
        metrics->row({static_cast<double>(rec.step), rec.loss.total, rec.loss.covariance_term, rec.loss.alignment_term,
                      rec.loss.grad_norm_term, rec.loss.time_grad_term, rec.loss.poincare_term, rec.poincare_ratio,
                      rec.wall_time});
      }
      if (observer) observer(rec);
    }
    if (cfg.eval_every > 0 && (s.step % cfg.eval_every == 0 || last)) evaluate();
    if (persist && (s.step % cfg.checkpoint_every == 0 || last)) {
      save_checkpoint(cfg.out_dir / "checkpoints" / checkpoint_name(s.step), make_checkpoint(s, cfg, s.model));
    }
  }
  if (metrics) metrics->flush();
  if (cfg.eval_every == 0) {
    s.best_model = s.model;
    s.best_step = s.step;
  }
  if (persist) {
    save_checkpoint(cfg.out_dir / "final.json", make_checkpoint(s, cfg, s.model));
    if (cfg.eval_every == 0) save_checkpoint(cfg.out_dir / "best.json", make_checkpoint(s, cfg, s.model));
  }
  return out;
}

}  // namespace vpfb

#endif  // VPFB_TRAINER_HPP
