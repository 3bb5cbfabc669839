#include <cmath>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "vpfb/checkpoint.hpp"
#include "vpfb/trainer.hpp"

using namespace vpfb;

namespace {

TrainConfig tiny_config() {
  TrainConfig cfg;
  cfg.arch.hidden = {16, 16};
  cfg.dataset.n_train = 512;
  cfg.dataset.n_test = 128;
  cfg.batch_size = 32;
  cfg.iterations = 30;
  cfg.log_every = 5;
  cfg.eval_every = 0;
  cfg.eval_samples = 64;
  cfg.eval_ode.steps = 5;
  return cfg;
}

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("vpfb_trainer_" + name);
  fs::remove_all(d);
  return d;
}

}  // namespace

TEST(Trainer, DeterministicUnderFixedSeeds) {
  const TrainConfig cfg = tiny_config();
  EXPECT_EQ(fit(cfg).state.model.params(), fit(cfg).state.model.params());
}

TEST(Trainer, ResumeMatchesUninterruptedRun) {
  TrainConfig cfg = tiny_config();
  const Vector full = fit(cfg).state.model.params();
  cfg.out_dir = temp_dir("resume");
  cfg.iterations = 12;
  cfg.checkpoint_every = 12;
  fit(cfg);
  const Checkpoint ck = load_checkpoint(cfg.out_dir / "checkpoints" / checkpoint_name(12));
  EXPECT_EQ(ck.step, 12);
  cfg.iterations = 30;
  const Vector resumed = fit(cfg, state_from_checkpoint(ck, cfg)).state.model.params();
  EXPECT_EQ(resumed, full);
}

TEST(Trainer, LossDecreasesAndPoincareRatioPositive) {
  TrainConfig cfg = tiny_config();
  cfg.iterations = 200;
  const FitResult r = fit(cfg);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 5; ++i) {
    first += r.log[static_cast<std::size_t>(i)].loss.total;
    last += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss.total;
  }
  EXPECT_LT(last, first);
  for (const StepRecord& rec : r.log) {
    if (rec.step > 100) {
      EXPECT_TRUE(std::isfinite(rec.poincare_ratio));
      EXPECT_GT(rec.poincare_ratio, 0.0);
    }
  }
}

TEST(Trainer, WritesRunFiles) {
  TrainConfig cfg = tiny_config();
  cfg.out_dir = temp_dir("files");
  cfg.eval_every = 15;
  cfg.checkpoint_every = 10;
  const FitResult r = fit(cfg);
  for (const char* f : {"metrics.csv", "eval.csv", "final.json", "best.json"}) EXPECT_TRUE(fs::exists(cfg.out_dir / f)) << f;
  for (long s : {10L, 20L, 30L}) EXPECT_TRUE(fs::exists(cfg.out_dir / "checkpoints" / checkpoint_name(s)));
  EXPECT_EQ(r.evals.size(), 2u);
  const auto [header, rows] = read_csv(cfg.out_dir / "metrics.csv");
  EXPECT_EQ(header.front(), "step");
  EXPECT_EQ(rows.size(), r.log.size());
}

TEST(Trainer, CheckpointRoundTrip) {
  const fs::path dir = temp_dir("ck");
  Checkpoint ck;
  ck.model = EnergyModel(tiny_config().arch, 3);
  ck.schedule.kappa = 1.7;
  ck.dataset.name = "spirals";
  ck.step = 42;
  ck.optimizer = make_optimizer_state(ck.model.params().size());
  ck.optimizer.m.setConstant(0.25);
  save_checkpoint(dir / "a.json", ck);
  const Checkpoint back = load_checkpoint(dir / "a.json");
  EXPECT_EQ(back.model.params(), ck.model.params());
  EXPECT_TRUE(back.model.arch() == ck.model.arch());
  EXPECT_EQ(back.schedule.kappa, 1.7);
  EXPECT_EQ(back.dataset.name, "spirals");
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.optimizer.m, ck.optimizer.m);
}

TEST(Trainer, CorruptCheckpointRejected) {
  const fs::path dir = temp_dir("bad");
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{\"format\": \"something-else\"}";
  EXPECT_ANY_THROW(load_checkpoint(dir / "bad.json"));
  EXPECT_THROW(load_checkpoint(dir / "missing.json"), IoError);
}

TEST(Trainer, NonFiniteLossNamesTheTerm) {
  TrainConfig cfg = tiny_config();
  TrainState s = initial_state(cfg);
  s.model.params()[0] = std::numeric_limits<double>::quiet_NaN();
  const DatasetSplit data = generate(cfg.dataset);
  try {
    train_step(s, cfg, data.train);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("_term"), std::string::npos) << e.what();
  }
}

TEST(Trainer, InvalidConfigRejected) {
  TrainConfig cfg = tiny_config();
  cfg.batch_size = 1;
  EXPECT_THROW(fit(cfg), ConfigError);
  cfg = tiny_config();
  cfg.arch.num_classes = 3;
  EXPECT_THROW(fit(cfg), ConfigError);
}

TEST(Optimizer, AdamFirstStepIsLearningRateTimesSign) {
  OptimizerConfig cfg;
  cfg.learning_rate = 0.1;
  OptimizerState s = make_optimizer_state(2);
  Vector p = Vector::Zero(2);
  Vector g(2);
  g << 3.0, -0.5;
  optimizer_step(cfg, s, p, g);
  EXPECT_NEAR(p[0], -0.1, 1e-6);
  EXPECT_NEAR(p[1], 0.1, 1e-6);
}
