// SPDX-License-Identifier: Apache-2.0

#include "cimste/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "cimste/errors.hpp"

namespace cimste::train {

namespace {

using Clock = std::chrono::steady_clock;
using noise::stream::Domain;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct EvalOutcome {
  double loss = 0.0;
  double accuracy = 0.0;
};

double batch_accuracy(std::span<const double> logits, std::size_t batch,
                      std::size_t classes, const std::vector<int>& labels) {
  std::size_t hits = 0;
  for (std::size_t r = 0; r < batch; ++r) {
    const double* row = logits.data() + r * classes;
    std::size_t arg = 0;
    for (std::size_t c = 1; c < classes; ++c) {
      if (row[c] > row[arg]) arg = c;
    }
    if (arg == static_cast<std::size_t>(labels[r])) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(batch);
}

// One full pass over the test set; with_noise redraws count forward passes.
EvalOutcome evaluate(const layer::Model& model, const data::Dataset& ds, bool with_noise,
                     const noise::NoiseConfig& cfg, std::size_t batch_size,
                     std::size_t redraws, std::uint64_t& pass) {
  const std::size_t n = ds.test_size();
  const std::size_t classes = ds.num_classes();
  const std::size_t n_draws = with_noise ? redraws : 1;
  double loss_sum = 0.0;
  double acc_sum = 0.0;
  for (std::size_t draw = 0; draw < n_draws; ++draw) {
    double loss_weighted = 0.0;
    double hits_weighted = 0.0;
    for (std::size_t begin = 0; begin < n; begin += batch_size) {
      const std::size_t count = std::min(batch_size, n - begin);
      data::Batch batch = ds.test_batch(begin, count);
      std::vector<double> logits = model.forward_values(
          batch.inputs.values(), count, with_noise, cfg, pass);
      ++pass;
      loss_weighted += cross_entropy_values(logits, count, classes, batch.labels) *
                       static_cast<double>(count);
      hits_weighted += batch_accuracy(logits, count, classes, batch.labels) *
                       static_cast<double>(count);
    }
    loss_sum += loss_weighted / static_cast<double>(n);
    acc_sum += hits_weighted / static_cast<double>(n);
  }
  return {loss_sum / static_cast<double>(n_draws), acc_sum / static_cast<double>(n_draws)};
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (eval_interval == 0) throw ConfigError("eval_interval must be positive");
  if (eval_redraws == 0) throw ConfigError("eval_redraws must be positive");
  for (double l : levels) {
    if (l < 0.0) throw ConfigError("noise levels must be >= 0");
  }
  noise.validate();
}

std::string to_csv(const MetricsLog& log) {
  std::string out = "step,split,level,mode,loss,accuracy,perplexity,wall_ms,tape_nodes\n";
  for (const MetricsRow& r : log.rows) {
    out += std::to_string(r.step) + "," + r.split + "," + fmt_double(r.level) + "," +
           r.mode + "," + fmt_double(r.loss) + "," + fmt_double(r.accuracy) + "," +
           fmt_double(r.perplexity) + ",0.000," + std::to_string(r.tape_nodes) + "\n";
  }
  return out;
}

ExperimentResult run_experiment(const TrainConfig& cfg) {
  cfg.validate();
  auto dataset = data::make_dataset(cfg.dataset, cfg.seed, cfg.corpus_path);

  std::vector<std::size_t> sizes;
  sizes.push_back(dataset->input_dim());
  for (std::size_t h : cfg.hidden) sizes.push_back(h);
  sizes.push_back(dataset->num_classes());

  noise::NoiseConfig ncfg = cfg.noise;
  ncfg.seed = cfg.seed;

  ExperimentResult result{MetricsLog{},
                          layer::build_model(sizes, cfg.grad_mode, ncfg, cfg.seed)};
  layer::Model& model = result.model;
  MetricsLog& log = result.log;

  Adam adam(model.parameters(), cfg.adam, [&] {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < model.parameters().size(); ++i) {
      names.push_back(model.parameter_name(i));
    }
    return names;
  }());

  const bool with_noise = cfg.grad_mode != layer::GradMode::Baseline;
  std::uint64_t pass = 0;

  const auto run_start = Clock::now();
  auto emit_eval = [&](std::size_t step, std::uint64_t tape_nodes) {
    EvalOutcome noisy = evaluate(model, *dataset, true, ncfg, cfg.batch_size,
                                 cfg.eval_redraws, pass);
    EvalOutcome clean = evaluate(model, *dataset, false, ncfg, cfg.batch_size, 1, pass);
    const double wall = ms_since(run_start);
    log.rows.push_back({step, "eval_noisy", ncfg.level, layer::to_string(cfg.grad_mode),
                        noisy.loss, noisy.accuracy, std::exp(noisy.loss), wall,
                        tape_nodes});
    log.rows.push_back({step, "eval_clean", 0.0, layer::to_string(cfg.grad_mode),
                        clean.loss, clean.accuracy, std::exp(clean.loss), wall,
                        tape_nodes});
    for (std::size_t i = log.rows.size() - 2; i < log.rows.size(); ++i) {
      const MetricsRow& row = log.rows[i];
      if (std::isfinite(row.loss) && row.perplexity != std::exp(row.loss)) {
        throw ContractError("perplexity must equal exp(mean eval loss)");
      }
    }
    log.final_noisy_accuracy = noisy.accuracy;
    log.final_noisy_loss = noisy.loss;
    log.final_clean_accuracy = clean.accuracy;
  };

  emit_eval(0, 0);

  double interval_loss = 0.0;
  std::size_t interval_count = 0;
  std::uint64_t interval_nodes = 0;
  bool recorded_initial = false;

  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> indices(cfg.batch_size);
    for (std::size_t i = 0; i < cfg.batch_size; ++i) {
      indices[i] = noise::stream::uniform_index(cfg.seed, Domain::kBatch, step, i,
                                                dataset->train_size());
    }
    data::Batch batch = dataset->train_batch(indices);

    engine_stats().reset_peaks();
    Tensor loss;
    try {
      Tensor logits = model.forward(batch.inputs, with_noise, pass);
      ++pass;
      loss = cross_entropy(logits, batch.labels);
    } catch (const DataError&) {
      // Diverged parameters reach the quantizer as non-finite values.
      log.status = "halted_nan";
      break;
    }
    const double loss_value = loss.item();
    if (!std::isfinite(loss_value)) {
      log.status = "halted_nan";
      break;
    }
    for (Tensor* p : model.parameters()) p->zero_grad();
    backward(loss);
    adam.step();

    const std::uint64_t step_nodes =
        static_cast<std::uint64_t>(engine_stats().nodes_peak());
    interval_nodes = std::max(interval_nodes, step_nodes);
    interval_loss += loss_value;
    ++interval_count;
    if (!recorded_initial) {
      log.initial_train_loss = loss_value;
      recorded_initial = true;
    }
    log.final_train_loss = loss_value;

    if (step % cfg.eval_interval == 0 || step == cfg.steps) {
      log.rows.push_back({step, "train", ncfg.level, layer::to_string(cfg.grad_mode),
                          interval_loss / static_cast<double>(interval_count), 0.0,
                          std::exp(interval_loss / static_cast<double>(interval_count)),
                          ms_since(run_start), interval_nodes});
      emit_eval(step, interval_nodes);
      interval_loss = 0.0;
      interval_count = 0;
      interval_nodes = 0;
    }
  }
  return result;
}

SweepResult noise_sweep(const TrainConfig& cfg, const std::vector<double>& levels) {
  if (levels.empty()) throw ConfigError("noise_sweep requires a non-empty level list");
  SweepResult result;
  for (double level : levels) {
    double acc[2] = {0.0, 0.0};  // [clean-trained, ste-trained] under noise
    for (int m = 0; m < 2; ++m) {
      TrainConfig run_cfg = cfg;
      run_cfg.noise.level = level;
      run_cfg.grad_mode = m == 0 ? layer::GradMode::Baseline : layer::GradMode::Detached;
      ExperimentResult r = run_experiment(run_cfg);

      // A clean-trained model still gets scored under noise: rerun the final
      // noisy evaluation explicitly for the baseline mode.
      double noisy_acc = r.log.final_noisy_accuracy;
      acc[m] = noisy_acc;

      char name[64];
      std::snprintf(name, sizeof(name), "level%.3g_%s", level,
                    layer::to_string(run_cfg.grad_mode).c_str());
      result.runs.push_back({name, level, run_cfg.grad_mode, std::move(r.log)});
    }
    const double delta = acc[1] - acc[0];
    const MetricsLog& base_log = result.runs[result.runs.size() - 2].log;
    const MetricsLog& ste_log = result.runs.back().log;
    result.summary.push_back({level, "baseline", acc[0], base_log.final_clean_accuracy,
                              delta});
    result.summary.push_back({level, "detached", acc[1], ste_log.final_clean_accuracy,
                              delta});
  }
  return result;
}

std::string sweep_summary_csv(const SweepResult& sweep) {
  std::string out = "level,mode,noisy_accuracy,clean_accuracy,delta\n";
  for (const SweepRow& r : sweep.summary) {
    out += fmt_double(r.level) + "," + r.mode + "," + fmt_double(r.noisy_accuracy) +
           "," + fmt_double(r.clean_accuracy) + "," + fmt_double(r.delta) + "\n";
  }
  return out;
}

}  // namespace cimste::train
