// SPDX-License-Identifier: Apache-2.0
//
// Experiment driver: trains a model per TrainConfig, records metrics at each
// eval interval (evaluating both under noise and clean), and runs the
// noise-level sweep that contrasts STE training against clean training
// evaluated under the same noise.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cimste/datasets.hpp"
#include "cimste/layer.hpp"
#include "cimste/noise.hpp"
#include "cimste/train.hpp"

namespace cimste::train {

struct TrainConfig {
  std::string dataset = "spirals";
  std::string corpus_path = "data/corpus.txt";
  std::vector<std::size_t> hidden = {32, 32};  // input/output dims come from the dataset
  layer::GradMode grad_mode = layer::GradMode::Detached;
  std::vector<double> levels = {1.0, 2.0, 3.0};
  std::size_t steps = 2000;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  std::size_t eval_interval = 200;
  std::size_t eval_redraws = 4;  // noisy evaluation averages this many redraws
  AdamConfig adam;
  noise::NoiseConfig noise;

  void validate() const;
};

struct MetricsRow {
  std::size_t step = 0;
  std::string split;  // train | eval_noisy | eval_clean
  double level = 0.0;
  std::string mode;
  double loss = 0.0;
  double accuracy = 0.0;
  double perplexity = 0.0;
  double wall_ms = 0.0;  // measured; the CSV writer pins this column to 0
  std::uint64_t tape_nodes = 0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;
  std::string status = "ok";  // ok | halted_nan
  double initial_train_loss = 0.0;
  double final_train_loss = 0.0;
  double final_noisy_accuracy = 0.0;
  double final_noisy_loss = 0.0;
  double final_clean_accuracy = 0.0;
};

// Header: step,split,level,mode,loss,accuracy,perplexity,wall_ms,tape_nodes.
// All columns are deterministic for a fixed config and seed; wall clock
// readings live in the run manifest instead.
std::string to_csv(const MetricsLog& log);

struct ExperimentResult {
  MetricsLog log;
  layer::Model model;
};

ExperimentResult run_experiment(const TrainConfig& cfg);

struct SweepRow {
  double level = 0.0;
  std::string mode;
  double noisy_accuracy = 0.0;
  double clean_accuracy = 0.0;
  double delta = 0.0;  // detached minus clean-trained, both evaluated under noise
};

struct SweepRun {
  std::string name;  // e.g. "level2.0_detached"
  double level = 0.0;
  layer::GradMode mode;
  MetricsLog log;
};

struct SweepResult {
  std::vector<SweepRun> runs;      // |levels| x 2 entries
  std::vector<SweepRow> summary;   // one row per (level, mode)
};

SweepResult noise_sweep(const TrainConfig& cfg, const std::vector<double>& levels);

std::string sweep_summary_csv(const SweepResult& sweep);

}  // namespace cimste::train
