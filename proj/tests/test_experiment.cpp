// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "cimste/experiment.hpp"
#include "test_util.hpp"

using namespace cimste;

namespace {

train::TrainConfig tiny_config() {
  train::TrainConfig cfg;
  cfg.dataset = "spirals";
  cfg.hidden = {8, 8};
  cfg.steps = 30;
  cfg.batch_size = 32;
  cfg.eval_interval = 15;
  cfg.eval_redraws = 2;
  cfg.seed = 5;
  cfg.noise.level = 1.0;
  return cfg;
}

}  // namespace

TEST_CASE("zero steps yields only the initial evaluation rows") {
  train::TrainConfig cfg = tiny_config();
  cfg.steps = 0;
  train::ExperimentResult r = train::run_experiment(cfg);
  REQUIRE(r.log.rows.size() == 2);
  CHECK(r.log.rows[0].step == 0);
  CHECK(r.log.rows[0].split == "eval_noisy");
  CHECK(r.log.rows[1].split == "eval_clean");
}

TEST_CASE("identical configs produce identical metrics logs") {
  const train::TrainConfig cfg = tiny_config();
  const std::string a = train::to_csv(train::run_experiment(cfg).log);
  const std::string b = train::to_csv(train::run_experiment(cfg).log);
  CHECK(a == b);
  CHECK(a.rfind("step,split,level,mode,loss,accuracy,perplexity,wall_ms,tape_nodes\n",
                0) == 0);
}

TEST_CASE("different seeds change the metrics") {
  train::TrainConfig cfg = tiny_config();
  const std::string a = train::to_csv(train::run_experiment(cfg).log);
  cfg.seed = 6;
  const std::string b = train::to_csv(train::run_experiment(cfg).log);
  CHECK(a != b);
}

TEST_CASE("perplexity column equals exp of the loss column") {
  train::ExperimentResult r = train::run_experiment(tiny_config());
  for (const train::MetricsRow& row : r.log.rows) {
    CHECK(row.perplexity == doctest::Approx(std::exp(row.loss)).epsilon(1e-12));
  }
}

TEST_CASE("training reduces loss on spirals at a small scale") {
  train::TrainConfig cfg = tiny_config();
  cfg.steps = 300;
  cfg.eval_interval = 300;
  train::ExperimentResult r = train::run_experiment(cfg);
  CHECK(r.log.status == "ok");
  CHECK(r.log.final_train_loss < r.log.initial_train_loss);
}

TEST_CASE("runaway learning rate halts with a nan status") {
  train::TrainConfig cfg = tiny_config();
  cfg.steps = 8;
  cfg.adam.alpha = 1e308;  // overflows the weights within two updates
  train::ExperimentResult r = train::run_experiment(cfg);
  CHECK(r.log.status == "halted_nan");
}

TEST_CASE("noise sweep emits one run per level and mode with a delta per level") {
  train::TrainConfig cfg = tiny_config();
  cfg.steps = 20;
  cfg.eval_interval = 20;
  train::SweepResult sweep = train::noise_sweep(cfg, {0.0, 1.0});
  REQUIRE(sweep.runs.size() == 4);  // 2 levels x {baseline, detached}
  REQUIRE(sweep.summary.size() == 4);
  CHECK(sweep.runs[0].mode == layer::GradMode::Baseline);
  CHECK(sweep.runs[1].mode == layer::GradMode::Detached);
  CHECK(sweep.summary[0].delta == sweep.summary[1].delta);

  // Delta must equal the difference of the runs' final noisy accuracies.
  const double recomputed = sweep.runs[1].log.final_noisy_accuracy -
                            sweep.runs[0].log.final_noisy_accuracy;
  CHECK(sweep.summary[0].delta == recomputed);
}

TEST_CASE("noise sweep rejects an empty level list") {
  CHECK_THROWS_AS(train::noise_sweep(tiny_config(), {}), ConfigError);
}

TEST_CASE("train config validation") {
  train::TrainConfig cfg = tiny_config();
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.levels = {-1.0};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
