// SPDX-License-Identifier: Apache-2.0
//
// CLI command implementations; the binary in tools/ wires argument parsing to
// these so tests can drive the commands directly.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cimste/diagnostics.hpp"
#include "cimste/experiment.hpp"

namespace cimste::cli {

inline constexpr const char* kVersion = "cimste 1.0.0";

struct CommonOptions {
  std::string config_path;                 // empty: defaults only
  std::vector<std::string> overrides;      // section.key=value
  std::string out_dir = "cimste_out";
  std::optional<std::uint64_t> seed;       // overrides train.seed
  std::optional<std::string> grad_mode;    // overrides train.grad_mode
  std::optional<double> noise_level;       // overrides noise.level
  std::size_t jobs = 1;
};

struct DiagnoseOptions {
  std::size_t layer_in = 8;
  std::size_t layer_out = 8;
  std::size_t batch = 4;
  std::size_t samples = 32;
  double fd_h = 1e-4;
  bool pipeline = false;
};

struct ProfileOptions {
  std::size_t steps = 25;
  std::size_t warmup = 5;
  std::size_t batch = 64;
};

// Each command writes a manifest plus its outputs into out_dir and returns a
// process exit status (0 on success).
int cmd_train(const CommonOptions& common);
int cmd_sweep(const CommonOptions& common);
int cmd_diagnose(const CommonOptions& common, const DiagnoseOptions& opts);
int cmd_profile(const CommonOptions& common, const ProfileOptions& opts);

// Resolves config file + flag overrides into the effective TrainConfig.
train::TrainConfig resolve_config(const CommonOptions& common);

}  // namespace cimste::cli
