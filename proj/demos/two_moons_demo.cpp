// Trains a small potential flow on 2-Moons, then samples it by ODE flow and
// scores held-out points with the Boltzmann energy.
//
//   two_moons_demo [iterations]

#include <cstdlib>
#include <iostream>

#include "vpfb/vpfb.hpp"

int main(int argc, char** argv) {
  using namespace vpfb;
  TrainConfig cfg;
  cfg.arch.hidden = {64, 64, 64};
  cfg.iterations = argc > 1 ? std::atoi(argv[1]) : 2000;
  cfg.eval_every = 0;

  const FitResult fit_result = fit(cfg, std::nullopt, [&](const StepRecord& r) {
    if (r.step % 500 == 0) std::cout << "step " << r.step << "  loss " << r.loss.total << "\n";
  });
  const EnergyModel& model = fit_result.state.model;
  const DatasetSplit data = generate(cfg.dataset);

  const ModelPotential potential(model, cfg.schedule);
  const Matrix prior = prior_sample(2, 2048, cfg.schedule.omega, 7);
  OdeConfig ode;
  ode.method = OdeMethod::rk4;
  ode.steps = 100;
  const Matrix samples = flow_sample(potential, prior, ode).samples;
  std::cout << "energy distance, prior vs held-out:   " << energy_distance(prior, data.test.points) << "\n"
            << "energy distance, samples vs held-out: " << energy_distance(samples, data.test.points) << "\n";

  const BoltzmannEnergy energy(potential, cfg.schedule);
  const Vector in = energy.energy(data.test.points);
  const Vector out = energy.energy(uniform_box(data.bounds, 2048, 11));
  std::cout << "AUROC held-out vs uniform box: "
            << auroc({in.begin(), in.end()}, {out.begin(), out.end()}) << "\n";
}
