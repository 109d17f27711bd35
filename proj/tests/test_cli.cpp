// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cimste/cli.hpp"

using namespace cimste;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / "cimste_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_small_config(const fs::path& dir) {
  const fs::path p = dir / "exp.ini";
  std::ofstream(p) << "[train]\n"
                      "dataset = spirals\n"
                      "steps = 24\n"
                      "batch_size = 16\n"
                      "eval_interval = 12\n"
                      "eval_redraws = 2\n"
                      "seed = 9\n"
                      "[model]\n"
                      "hidden = [8, 8]\n"
                      "[noise]\n"
                      "level = 1.0\n";
  return p;
}

}  // namespace

TEST_CASE("cmd_train fails cleanly on a missing config file") {
  cli::CommonOptions common;
  common.config_path = "/definitely/missing.ini";
  common.out_dir = fresh_dir("missing").string();
  CHECK(cli::cmd_train(common) != 0);
}

TEST_CASE("grad mode override lands in the manifest snapshot") {
  const fs::path dir = fresh_dir("manifest");
  cli::CommonOptions common;
  common.config_path = write_small_config(dir).string();
  common.out_dir = (dir / "run").string();
  common.grad_mode = "isolated";
  common.overrides = {"train.steps=6", "train.eval_interval=6"};
  REQUIRE(cli::cmd_train(common) == 0);

  const auto manifest = nlohmann::json::parse(read_file(dir / "run" / "manifest.json"));
  const std::string snapshot = manifest["config"];
  CHECK(snapshot.find("grad_mode = isolated") != std::string::npos);
  CHECK(snapshot.find("steps = 6") != std::string::npos);
  CHECK(manifest["seed"] == 9);
  CHECK(manifest.contains("start_time"));
  CHECK(manifest.contains("end_time"));

  // The snapshot reproduces the run: feed it back and compare metrics.
  const fs::path dir2 = fresh_dir("manifest2");
  const fs::path cfg2 = dir2 / "snapshot.ini";
  std::ofstream(cfg2) << snapshot;
  cli::CommonOptions common2;
  common2.config_path = cfg2.string();
  common2.out_dir = (dir2 / "run").string();
  REQUIRE(cli::cmd_train(common2) == 0);
  CHECK(read_file(dir2 / "run" / "metrics.csv") == read_file(dir / "run" / "metrics.csv"));
}

TEST_CASE("identical config and seed produce byte-identical metrics") {
  const fs::path dir = fresh_dir("determinism");
  const fs::path cfg = write_small_config(dir);
  for (const char* sub : {"a", "b"}) {
    cli::CommonOptions common;
    common.config_path = cfg.string();
    common.out_dir = (dir / sub).string();
    REQUIRE(cli::cmd_train(common) == 0);
  }
  CHECK(read_file(dir / "a" / "metrics.csv") == read_file(dir / "b" / "metrics.csv"));
  CHECK(read_file(dir / "a" / "final.ckpt") == read_file(dir / "b" / "final.ckpt"));
}

TEST_CASE("sweep writes one csv per level and mode plus a summary") {
  const fs::path dir = fresh_dir("sweep");
  cli::CommonOptions common;
  common.config_path = write_small_config(dir).string();
  common.out_dir = (dir / "run").string();
  common.overrides = {"train.levels=[1.0, 2.0, 3.0]", "train.steps=12",
                      "train.eval_interval=12"};
  REQUIRE(cli::cmd_sweep(common) == 0);

  int run_csvs = 0;
  for (const auto& entry : fs::directory_iterator(dir / "run")) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("level", 0) == 0 && name.find(".csv") != std::string::npos) ++run_csvs;
  }
  CHECK(run_csvs == 6);

  // Recompute delta from the emitted per-run CSVs: last eval_noisy accuracy.
  auto final_noisy_acc = [&](const std::string& name) {
    std::stringstream ss(read_file(dir / "run" / name));
    std::string line, last;
    while (std::getline(ss, line)) {
      if (line.find(",eval_noisy,") != std::string::npos) last = line;
    }
    REQUIRE_FALSE(last.empty());
    std::stringstream fields(last);
    std::string f;
    for (int i = 0; i < 6; ++i) std::getline(fields, f, ',');
    return std::stod(f);
  };
  const std::string summary = read_file(dir / "run" / "summary.csv");
  std::stringstream ss(summary);
  std::string line;
  std::getline(ss, line);  // header
  CHECK(line == "level,mode,noisy_accuracy,clean_accuracy,delta");
  while (std::getline(ss, line)) {
    std::stringstream fields(line);
    std::string level, mode, acc, clean, delta;
    std::getline(fields, level, ',');
    std::getline(fields, mode, ',');
    std::getline(fields, acc, ',');
    std::getline(fields, clean, ',');
    std::getline(fields, delta, ',');
    const double want = final_noisy_acc("level" + level + "_detached.csv") -
                        final_noisy_acc("level" + level + "_baseline.csv");
    CHECK(std::stod(delta) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("sweep rejects an empty level list") {
  const fs::path dir = fresh_dir("sweep_empty");
  cli::CommonOptions common;
  common.config_path = write_small_config(dir).string();
  common.out_dir = (dir / "run").string();
  common.overrides = {"train.levels=[]"};
  CHECK(cli::cmd_sweep(common) != 0);
}

TEST_CASE("diagnose with noise disabled reports perfect cosine alignment") {
  const fs::path dir = fresh_dir("diagnose");
  cli::CommonOptions common;
  common.out_dir = (dir / "run").string();
  common.overrides = {"noise.enabled_sources=[]"};
  cli::DiagnoseOptions opts;
  opts.samples = 4;
  REQUIRE(cli::cmd_diagnose(common, opts) == 0);

  const auto report = nlohmann::json::parse(read_file(dir / "run" / "gradreport.json"));
  CHECK(report["cos_mean"].get<double>() == 1.0);
  CHECK(report["var_gstar"].get<double>() >= 0.0);
  CHECK(fs::exists(dir / "run" / "gradreport_samples.csv"));
}

TEST_CASE("profile emits four rows and a stable ordering") {
  const fs::path dir = fresh_dir("profile");
  cli::CommonOptions common;
  common.out_dir = (dir / "run").string();
  common.overrides = {"model.hidden=[12]"};
  cli::ProfileOptions opts;
  opts.steps = 5;
  opts.warmup = 1;
  opts.batch = 16;
  REQUIRE(cli::cmd_profile(common, opts) == 0);

  const std::string csv = read_file(dir / "run" / "costs.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  CHECK(csv.find("baseline,") != std::string::npos);
  CHECK(csv.find("full,") != std::string::npos);
  CHECK(csv.find("isolated,") != std::string::npos);
  CHECK(csv.find("detached,") != std::string::npos);
}
