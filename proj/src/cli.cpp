// SPDX-License-Identifier: Apache-2.0

#include "cimste/cli.hpp"

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include <json.hpp>

#include "cimste/checkpoint.hpp"
#include "cimste/config.hpp"
#include "cimste/errors.hpp"

namespace cimste::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
}

// The manifest carries everything needed to reproduce the run plus the
// wall-clock readings, which deliberately stay out of the metrics CSV.
class Manifest {
 public:
  Manifest(const fs::path& dir, const std::string& command,
           const train::TrainConfig& cfg) {
    path_ = dir / "manifest.json";
    doc_["command"] = command;
    doc_["version"] = kVersion;
    doc_["seed"] = cfg.seed;
    doc_["config"] = config::to_ini(cfg);
    doc_["outputs"] = json::array();
    doc_["start_time"] = timestamp_utc();
    start_ = std::chrono::steady_clock::now();
    flush();
  }

  void add_output(const fs::path& p) {
    doc_["outputs"].push_back(p.filename().string());
    flush();
  }

  void finish() {
    doc_["end_time"] = timestamp_utc();
    doc_["elapsed_ms"] =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_)
            .count();
    flush();
  }

 private:
  void flush() { write_text(path_, doc_.dump(2) + "\n"); }

  fs::path path_;
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

int guarded(const std::function<void()>& body) {
  try {
    body();
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

train::TrainConfig resolve_config(const CommonOptions& common) {
  train::TrainConfig cfg;
  if (!common.config_path.empty()) {
    cfg = config::load_train_config(common.config_path);
  }
  for (const std::string& ov : common.overrides) {
    const std::size_t eq = ov.find('=');
    if (eq == std::string::npos) {
      throw UsageError("override '" + ov + "' is not of the form section.key=value");
    }
    config::apply_override(cfg, ov.substr(0, eq), ov.substr(eq + 1));
  }
  if (common.seed) config::apply_override(cfg, "train.seed", std::to_string(*common.seed));
  if (common.grad_mode) config::apply_override(cfg, "train.grad_mode", *common.grad_mode);
  if (common.noise_level) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", *common.noise_level);
    config::apply_override(cfg, "noise.level", buf);
  }
  return cfg;
}

int cmd_train(const CommonOptions& common) {
  return guarded([&] {
    train::TrainConfig cfg = resolve_config(common);
    cfg.validate();
    fs::create_directories(common.out_dir);
    Manifest manifest(common.out_dir, "train", cfg);

    train::ExperimentResult result = train::run_experiment(cfg);

    const fs::path metrics_path = fs::path(common.out_dir) / "metrics.csv";
    write_text(metrics_path, train::to_csv(result.log));
    manifest.add_output(metrics_path);

    const fs::path ckpt_path = fs::path(common.out_dir) / "final.ckpt";
    ckpt::save_model(ckpt_path.string(), result.model);
    manifest.add_output(ckpt_path);
    manifest.finish();

    if (result.log.status != "ok") {
      throw TrainingError("run halted with status '" + result.log.status + "'");
    }
    std::printf("train: %s, final noisy accuracy %.4f, clean accuracy %.4f\n",
                result.log.status.c_str(), result.log.final_noisy_accuracy,
                result.log.final_clean_accuracy);
  });
}

int cmd_sweep(const CommonOptions& common) {
  return guarded([&] {
    train::TrainConfig cfg = resolve_config(common);
    cfg.validate();
    if (cfg.levels.empty()) throw UsageError("sweep requires a non-empty train.levels list");
    fs::create_directories(common.out_dir);
    Manifest manifest(common.out_dir, "sweep", cfg);

    train::SweepResult sweep;
    if (common.jobs <= 1) {
      sweep = train::noise_sweep(cfg, cfg.levels);
    } else {
      // One level per task; each run inside stays single-threaded.
      std::vector<std::future<train::SweepResult>> futures;
      for (double level : cfg.levels) {
        futures.push_back(std::async(std::launch::async, [cfg, level] {
          return train::noise_sweep(cfg, {level});
        }));
      }
      for (auto& f : futures) {
        train::SweepResult part = f.get();
        for (auto& run : part.runs) sweep.runs.push_back(std::move(run));
        for (auto& row : part.summary) sweep.summary.push_back(std::move(row));
      }
    }

    for (const train::SweepRun& run : sweep.runs) {
      const fs::path p = fs::path(common.out_dir) / (run.name + ".csv");
      write_text(p, train::to_csv(run.log));
      manifest.add_output(p);
    }
    const fs::path summary_path = fs::path(common.out_dir) / "summary.csv";
    write_text(summary_path, train::sweep_summary_csv(sweep));
    manifest.add_output(summary_path);
    manifest.finish();

    for (const train::SweepRow& row : sweep.summary) {
      std::printf("sweep: level %.3g %-9s noisy acc %.4f delta %+.4f\n", row.level,
                  row.mode.c_str(), row.noisy_accuracy, row.delta);
    }
  });
}

int cmd_diagnose(const CommonOptions& common, const DiagnoseOptions& opts) {
  return guarded([&] {
    train::TrainConfig cfg = resolve_config(common);
    noise::NoiseConfig ncfg = cfg.noise;
    ncfg.seed = cfg.seed;
    ncfg.validate();
    fs::create_directories(common.out_dir);
    Manifest manifest(common.out_dir, "diagnose", cfg);

    layer::LinearLayer probe;
    {
      std::vector<double> w(opts.layer_out * opts.layer_in);
      noise::stream::fill_standard_normals(cfg.seed, noise::stream::Domain::kInit, 0, 0, w);
      for (double& v : w) v *= 0.5;
      probe.weight = Tensor({opts.layer_out, opts.layer_in}, std::move(w), true);
      probe.bias = Tensor::zeros({opts.layer_out}, true);
    }
    std::vector<double> xv(opts.batch * opts.layer_in);
    noise::stream::fill_standard_normals(cfg.seed, noise::stream::Domain::kInit, 1, 0, xv);
    Tensor x({opts.batch, opts.layer_in}, std::move(xv));

    diag::LinearLoss loss = diag::make_linear_loss(opts.batch, opts.layer_out, cfg.seed);
    std::vector<double> g_tilde = diag::ste_gradient(probe, x, loss);

    diag::OracleOptions oracle_opts;
    oracle_opts.h = opts.fd_h;
    oracle_opts.n_samples = opts.samples;
    oracle_opts.pipeline = opts.pipeline;
    diag::OracleResult oracle = diag::oracle_true_gradient(probe, x, loss, ncfg, oracle_opts);
    diag::GradReport report = diag::analyze(g_tilde, oracle.samples);
    report.discontinuity_flags = oracle.discontinuity_flags;

    json doc;
    doc["g_tilde"] = report.g_tilde;
    doc["g_star_samples"] = report.g_star_samples;
    doc["delta_samples"] = report.delta_samples;
    doc["cos_mean"] = report.cos_mean;
    doc["cos_std"] = report.cos_std;
    doc["cos_predicted"] = report.cos_predicted;
    doc["var_gstar"] = report.var_gstar;
    doc["mag_ratio"] = report.mag_ratio;
    doc["delta_mean_norm"] = report.delta_mean_norm;
    doc["gdelta_corr"] = report.gdelta_corr;
    doc["discontinuity_flags"] = report.discontinuity_flags;

    const fs::path report_path = fs::path(common.out_dir) / "gradreport.json";
    write_text(report_path, doc.dump(2) + "\n");
    manifest.add_output(report_path);

    const fs::path samples_path = fs::path(common.out_dir) / "gradreport_samples.csv";
    write_text(samples_path, diag::report_samples_csv(report));
    manifest.add_output(samples_path);
    manifest.finish();

    std::printf("diagnose: cos_mean %.6f predicted %.6f corr %.4f var %.3e\n",
                report.cos_mean, report.cos_predicted, report.gdelta_corr,
                report.var_gstar);
  });
}

int cmd_profile(const CommonOptions& common, const ProfileOptions& opts) {
  return guarded([&] {
    train::TrainConfig cfg = resolve_config(common);
    fs::create_directories(common.out_dir);
    Manifest manifest(common.out_dir, "profile", cfg);

    diag::ProfileWorkload workload;
    workload.steps = opts.steps;
    workload.warmup = opts.warmup;
    workload.batch = opts.batch;
    workload.level = cfg.noise.level;
    workload.seed = cfg.seed;

    const std::vector<diag::CostReport> reports = diag::profile_all_modes(workload);
    const fs::path p = fs::path(common.out_dir) / "costs.csv";
    write_text(p, diag::cost_csv(reports));
    manifest.add_output(p);
    manifest.finish();

    for (const diag::CostReport& r : reports) {
      std::printf("profile: %-9s %8.3f ms/step  %10lld peak bytes  %6llu tape nodes\n",
                  layer::to_string(r.mode).c_str(), r.wall_ms_per_step,
                  static_cast<long long>(r.peak_bytes),
                  static_cast<unsigned long long>(r.tape_nodes));
    }
  });
}

}  // namespace cimste::cli
