// SPDX-License-Identifier: Apache-2.0

#include <CLI11.hpp>

#include "cimste/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Noise-aware training for analog compute-in-memory crossbars"};
  app.set_version_flag("--version", cimste::cli::kVersion);
  app.require_subcommand(1);

  cimste::cli::CommonOptions common;
  cimste::cli::DiagnoseOptions diag_opts;
  cimste::cli::ProfileOptions profile_opts;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "experiment config file (INI)");
    cmd->add_option("--out", common.out_dir, "output directory");
    cmd->add_option("--seed", common.seed, "run seed (overrides train.seed)");
    cmd->add_option("--grad-mode", common.grad_mode,
                    "baseline|full|isolated|detached (overrides train.grad_mode)");
    cmd->add_option("--noise-level", common.noise_level, "overrides noise.level");
    cmd->add_option("--jobs", common.jobs, "parallel sweep runs");
    cmd->add_option("overrides", common.overrides, "section.key=value overrides");
  };

  CLI::App* train_cmd = app.add_subcommand("train", "train one model and log metrics");
  add_common(train_cmd);

  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "noise-level sweep: STE vs clean training under noise");
  add_common(sweep_cmd);

  CLI::App* diagnose_cmd =
      app.add_subcommand("diagnose", "gradient direction/variance diagnostics");
  add_common(diagnose_cmd);
  diagnose_cmd->add_option("--din", diag_opts.layer_in, "probe layer input features");
  diagnose_cmd->add_option("--dout", diag_opts.layer_out, "probe layer output features");
  diagnose_cmd->add_option("--batch", diag_opts.batch, "probe batch size");
  diagnose_cmd->add_option("--samples", diag_opts.samples, "oracle noise draws");
  diagnose_cmd->add_option("--fd-h", diag_opts.fd_h, "finite-difference step");
  diagnose_cmd->add_flag("--pipeline", diag_opts.pipeline,
                         "differentiate the full int8 pipeline instead of the "
                         "continuous weight-space noise model");

  CLI::App* profile_cmd =
      app.add_subcommand("profile", "per-mode training cost comparison");
  add_common(profile_cmd);
  profile_cmd->add_option("--steps", profile_opts.steps, "measured steps");
  profile_cmd->add_option("--warmup", profile_opts.warmup, "warmup steps");
  profile_cmd->add_option("--batch", profile_opts.batch, "workload batch size");

  CLI11_PARSE(app, argc, argv);

  if (train_cmd->parsed()) return cimste::cli::cmd_train(common);
  if (sweep_cmd->parsed()) return cimste::cli::cmd_sweep(common);
  if (diagnose_cmd->parsed()) return cimste::cli::cmd_diagnose(common, diag_opts);
  if (profile_cmd->parsed()) return cimste::cli::cmd_profile(common, profile_opts);
  return 1;
}
