// vpfb: train, sample and evaluate energy-parameterized potential flows.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vpfb/vpfb.hpp"

namespace fs = std::filesystem;
using namespace vpfb;

namespace {

struct Options {
  std::string config;
  std::string checkpoint;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> method;
  std::optional<double> lambda;
  std::optional<double> horizon;
  std::string in_set;
  std::vector<std::string> out_sets;
};

fs::path output_root() {
  const char* env = std::getenv("VPFB_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::path("runs");
}

RunConfig base_config(const Options& o) { return o.config.empty() ? RunConfig{} : load_config(o.config); }

/// Run directory of a checkpoint: the folder holding it, or its parent when
/// it sits in checkpoints/.
fs::path run_dir_of(const fs::path& checkpoint) {
  fs::path dir = checkpoint.parent_path();
  if (dir.filename() == "checkpoints") dir = dir.parent_path();
  return dir.empty() ? fs::path(".") : dir;
}

fs::path resolve_out_dir(const Options& o, const std::string& command) {
  if (!o.out_dir.empty()) return o.out_dir;
  return run_dir_of(o.checkpoint) / command;
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent_dir(path);
  std::ofstream out(path);
  if (!out || !(out << text)) throw IoError("cannot write " + path.string());
}

void echo_config(const fs::path& dir, const RunConfig& cfg) { write_text(dir / "config.ini", resolved_config(cfg)); }

/// Loads the checkpoint and makes the config agree with what it was trained on.
Checkpoint load_into(const Options& o, RunConfig& cfg) {
  if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required");
  Checkpoint ck = load_checkpoint(o.checkpoint);
  cfg.train.arch = ck.model.arch();
  cfg.train.schedule = ck.schedule;
  cfg.train.dataset = ck.dataset;
  return ck;
}

std::vector<int> all_classes(const EnergyModel& m, const std::vector<int>& requested) {
  if (!m.conditional()) return {};
  if (!requested.empty()) return requested;
  std::vector<int> c;
  for (int k = 0; k < m.arch().num_classes; ++k) c.push_back(k);
  return c;
}

void apply_ode_flags(const Options& o, OdeConfig& ode) {
  if (o.method) ode.method = ode_method_from_string(*o.method);
  if (o.horizon) ode.horizon = *o.horizon;
  if (o.steps) ode.steps = *o.steps;
}

int cmd_train(const Options& o) {
  RunConfig cfg = base_config(o);
  if (o.seed) cfg.train.seed = cfg.train.model_seed = *o.seed;
  if (o.steps) cfg.train.iterations = *o.steps;
  if (!o.out_dir.empty()) {
    cfg.train.out_dir = o.out_dir;
  } else if (cfg.train.out_dir.empty()) {
    const std::string stem = o.config.empty() ? "default" : fs::path(o.config).stem().string();
    cfg.train.out_dir = output_root() / stem;
  }
  cfg.validate();
  echo_config(cfg.train.out_dir, cfg);

  std::optional<TrainState> resume;
  if (!o.checkpoint.empty()) {
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    resume = state_from_checkpoint(ck, cfg.train);
    std::cout << "resuming from step " << ck.step << "\n";
  }
  const int every = std::max(cfg.train.log_every, cfg.train.iterations / 20);
  const FitResult r = fit(cfg.train, std::move(resume), [&](const StepRecord& rec) {
    if (rec.step % every != 0 && rec.step != cfg.train.iterations) return;
    std::cout << "step " << rec.step << "  loss " << rec.loss.total << "  poincare " << rec.poincare_ratio << "  "
              << std::fixed << std::setprecision(1) << rec.wall_time << "s" << std::defaultfloat
              << std::setprecision(6) << "\n";
  });
  for (const auto& [step, ed] : r.evals) std::cout << "eval step " << step << "  energy_distance " << ed << "\n";
  std::cout << "run directory: " << cfg.train.out_dir.string() << "\n";
  return 0;
}

int cmd_sample(const Options& o) {
  RunConfig cfg = base_config(o);
  const Checkpoint ck = load_into(o, cfg);
  if (o.seed) cfg.sample.seed = *o.seed;
  const bool sgld = o.method && *o.method == "sgld";
  if (!sgld) apply_ode_flags(o, cfg.sample.ode);
  if (o.lambda) cfg.sgld.lambda = *o.lambda;
  cfg.validate();
  const fs::path dir = resolve_out_dir(o, "sample");
  echo_config(dir, cfg);

  const ModelPotential pot(ck.model, ck.schedule, all_classes(ck.model, cfg.sample.classes));
  const Matrix prior = prior_sample(ck.model.dim(), cfg.sample.num_samples, ck.schedule.omega, cfg.sample.seed);
  if (sgld) {
    SgldConfig sc;
    sc.step_size = cfg.sgld.step_size(ck.schedule);
    sc.steps = o.steps.value_or(cfg.sgld.steps);
    sc.lambda = cfg.sgld.lambda;
    sc.divergence_radius = cfg.sgld.divergence_radius;
    sc.seed = cfg.sample.seed;
    const SgldResult r = sgld_sample(BoltzmannEnergy(pot, ck.schedule), prior, sc);
    write_points_csv(dir / "samples.csv", r.samples);
  } else {
    const FlowResult r = flow_sample(pot, prior, cfg.sample.ode);
    write_points_csv(dir / "samples.csv", r.samples);
    if (cfg.sample.ode.record_trajectory) {
      std::vector<std::string> header{"step", "time", "chain"};
      for (Eigen::Index j = 0; j < prior.cols(); ++j) header.push_back("x" + std::to_string(j + 1));
      CsvWriter w(dir / "trajectory.csv", header);
      std::vector<double> row(header.size());
      for (std::size_t s = 0; s < r.trajectory.size(); ++s) {
        const Matrix& X = r.trajectory[s];
        for (Eigen::Index c = 0; c < X.rows(); ++c) {
          row[0] = static_cast<double>(s);
          row[1] = r.times[s];
          row[2] = static_cast<double>(c);
          for (Eigen::Index j = 0; j < X.cols(); ++j) row[3 + static_cast<std::size_t>(j)] = X(c, j);
          w.row(row);
        }
      }
    }
    std::cout << "accepted steps " << r.accepted_steps << ", rejected " << r.rejected_steps << "\n";
  }
  std::cout << "wrote " << (dir / "samples.csv").string() << "\n";
  return 0;
}

int cmd_density(const Options& o) {
  RunConfig cfg = base_config(o);
  const Checkpoint ck = load_into(o, cfg);
  if (o.seed) cfg.eval.seed = *o.seed;
  cfg.validate();
  const fs::path dir = resolve_out_dir(o, "density");
  echo_config(dir, cfg);

  const DatasetSplit data = generate(ck.dataset);
  const ModelPotential pot(ck.model, ck.schedule, all_classes(ck.model, {}));
  const BoltzmannEnergy energy(pot, ck.schedule);
  const int res = cfg.eval.grid_resolution;
  const DensityGrid grid =
      density_grid([&](const Matrix& X) { return energy.energy(X); }, data.bounds, res, res, "boltzmann_energy");
  write_grid_csv(dir / "density_grid.csv", grid);
  write_grid_pgm(dir / "density.pgm", grid);

  const Vector e_train = energy.energy(data.train.points);
  const Vector e_test = energy.energy(data.test.points);
  const EnergyHistogram h = energy_histogram(std::vector<double>(e_train.begin(), e_train.end()),
                                             std::vector<double>(e_test.begin(), e_test.end()), cfg.eval.histogram_bins);
  write_histogram_csv(dir / "energy_histogram.csv", h);

  const double cov = top_cell_coverage(grid, data.test.points, cfg.eval.coverage_fraction);
  std::cout << "coverage " << cov << "\nhistogram_intersection " << h.intersection << "\n";
  return 0;
}

int cmd_ood(const Options& o) {
  RunConfig cfg = base_config(o);
  const Checkpoint ck = load_into(o, cfg);
  if (o.seed) cfg.eval.seed = *o.seed;
  cfg.validate();
  const fs::path dir = resolve_out_dir(o, "ood");
  echo_config(dir, cfg);

  const DatasetSplit data = generate(ck.dataset);
  const ModelPotential pot(ck.model, ck.schedule, all_classes(ck.model, {}));
  const BoltzmannEnergy energy(pot, ck.schedule);
  const Matrix in = o.in_set.empty() ? data.test.points : read_points_csv(o.in_set).points;

  std::vector<std::pair<std::string, Matrix>> outs;
  if (o.out_sets.empty()) {
    outs.emplace_back("uniform_box", uniform_box(data.bounds, cfg.eval.ood_samples, cfg.eval.seed));
    DatasetSpec cb;
    cb.name = "checkerboard";
    cb.seed = cfg.eval.seed;
    cb.n_train = cfg.eval.ood_samples;
    cb.n_test = 0;
    outs.emplace_back("checkerboard", generate(cb).train.points);
  } else {
    for (const auto& p : o.out_sets) outs.emplace_back(fs::path(p).stem().string(), read_points_csv(p).points);
  }

  const Vector s_in = energy.energy(in);
  CsvWriter w(dir / "scores.csv", {"set", "score"});
  for (double s : s_in) w.row({0.0, s});
  const std::vector<double> in_scores(s_in.begin(), s_in.end());
  for (std::size_t k = 0; k < outs.size(); ++k) {
    const Vector s_out = energy.energy(outs[k].second);
    for (double s : s_out) w.row({static_cast<double>(k + 1), s});
    std::cout << "auroc " << outs[k].first << " " << auroc(in_scores, std::vector<double>(s_out.begin(), s_out.end()))
              << "\n";
  }
  return 0;
}

int cmd_diagnose(const Options& o) {
  RunConfig cfg = base_config(o);
  const Checkpoint ck = load_into(o, cfg);
  if (o.seed) cfg.sgld.seed = *o.seed;
  if (o.steps) cfg.sgld.steps = *o.steps;
  if (o.lambda) cfg.sgld.lambda = *o.lambda;
  if (o.method) cfg.sample.ode.method = ode_method_from_string(*o.method);
  if (o.horizon) cfg.sample.ode.horizon = *o.horizon;
  cfg.validate();
  const fs::path dir = resolve_out_dir(o, "diagnose");
  echo_config(dir, cfg);

  const ModelPotential pot(ck.model, ck.schedule, all_classes(ck.model, cfg.sample.classes));
  const BoltzmannEnergy energy(pot, ck.schedule);
  Matrix init = prior_sample(ck.model.dim(), cfg.sgld.chains, ck.schedule.omega, cfg.sgld.seed);
  if (cfg.sgld.init == "ode_output") init = flow_sample(pot, init, cfg.sample.ode).samples;

  SgldConfig sc;
  sc.step_size = cfg.sgld.step_size(ck.schedule);
  sc.steps = cfg.sgld.steps;
  sc.lambda = cfg.sgld.lambda;
  sc.divergence_radius = cfg.sgld.divergence_radius;
  sc.seed = cfg.sgld.seed;
  sc.record_samples = true;
  sc.record_every = cfg.sgld.record_every;
  const SgldResult r = sgld_sample(energy, init, sc);
  {
    CsvWriter w(dir / "sgld_diagnostics.csv", {"step", "grad_norm", "energy_norm"});
    for (std::size_t s = 0; s < r.grad_norm_mean.size(); ++s) {
      w.row({static_cast<double>(s), r.grad_norm_mean[s], r.energy_norm_mean[s]});
    }
  }
  write_points_csv(dir / "sgld_samples.csv", r.samples);

  // Norms of Phi and grad_x Phi along the ODE flow.
  OdeConfig ode = cfg.sample.ode;
  ode.record_trajectory = true;
  const Matrix prior = prior_sample(ck.model.dim(), cfg.sgld.chains, ck.schedule.omega, cfg.sgld.seed + 1);
  const FlowResult flow = flow_sample(pot, prior, ode);
  CsvWriter w(dir / "ode_diagnostics.csv", {"time", "grad_norm", "energy_norm"});
  for (std::size_t s = 0; s < flow.trajectory.size(); ++s) {
    const Matrix& X = flow.trajectory[s];
    w.row({flow.times[s], pot.grad(X, flow.times[s]).rowwise().squaredNorm().mean(),
           pot.energy(X, flow.times[s]).squaredNorm() / static_cast<double>(X.rows())});
  }

  const std::size_t n = r.grad_norm_mean.size();
  const std::size_t tenth = std::max<std::size_t>(1, n / 10);
  double first = 0.0, last = 0.0;
  for (std::size_t s = 0; s < tenth; ++s) {
    first += r.grad_norm_mean[s];
    last += r.grad_norm_mean[n - 1 - s];
  }
  std::cout << "sgld grad_norm first 10% " << first / tenth << ", last 10% " << last / tenth << "\n";
  return 0;
}

int cmd_verify() {
  const std::vector<CheckResult> results = run_verification();
  bool ok = true;
  for (const CheckResult& c : results) {
    ok = ok && c.passed;
    std::cout << (c.passed ? "PASS " : "FAIL ") << std::left << std::setw(26) << c.id << std::right << " measured "
              << std::setw(12) << c.measured << "  tol " << c.tolerance << "  " << c.detail << "\n";
  }
  std::cout << (ok ? "all checks passed" : "some checks failed") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variational potential flow: training, sampling and evaluation"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", o.config, "INI config file")->check(CLI::ExistingFile);
    auto* ck = sub->add_option("--checkpoint", o.checkpoint,
                               needs_checkpoint ? "trained checkpoint (JSON)" : "checkpoint to resume from");
    ck->check(CLI::ExistingFile);
    if (needs_checkpoint) ck->required();
    sub->add_option("--out-dir", o.out_dir, "output directory");
    sub->add_option("--seed-override", o.seed, "replace the command's seed");
  };

  auto* train = app.add_subcommand("train", "train a model from a config");
  add_common(train, false);
  train->add_option("--steps", o.steps, "optimizer steps");

  auto* sample = app.add_subcommand("sample", "draw samples by ODE flow or SGLD");
  add_common(sample, true);
  sample->add_option("--method", o.method, "euler | rk4 | adaptive_rk45 | sgld");
  sample->add_option("--steps", o.steps, "fixed ODE steps or SGLD steps");
  sample->add_option("--horizon", o.horizon, "ODE end time");
  sample->add_option("--lambda", o.lambda, "SGLD noise scale");

  auto* density = app.add_subcommand("density", "Boltzmann log-density grid, heatmap and energy histogram");
  add_common(density, true);

  auto* ood = app.add_subcommand("ood", "score in- and out-of-distribution sets and report AUROC");
  add_common(ood, true);
  ood->add_option("--in-set", o.in_set, "in-distribution points CSV (default: held-out split)")
      ->check(CLI::ExistingFile);
  ood->add_option("--out-set", o.out_sets, "out-of-distribution points CSV, repeatable (default: box and checkerboard)")
      ->check(CLI::ExistingFile);

  auto* diagnose = app.add_subcommand("diagnose", "gradient and energy norms along SGLD chains and the ODE flow");
  add_common(diagnose, true);
  diagnose->add_option("--steps", o.steps, "SGLD steps");
  diagnose->add_option("--lambda", o.lambda, "SGLD noise scale");
  diagnose->add_option("--method", o.method, "ODE method");
  diagnose->add_option("--horizon", o.horizon, "ODE end time");

  auto* verify = app.add_subcommand("verify", "run the oracle checks");
  auto* defaults = app.add_subcommand("defaults", "list config keys with defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(o);
    if (*sample) return cmd_sample(o);
    if (*density) return cmd_density(o);
    if (*ood) return cmd_ood(o);
    if (*diagnose) return cmd_diagnose(o);
    if (*verify) return cmd_verify();
    if (*defaults) {
      std::cout << config_reference();
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "I/O error: malformed checkpoint: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
