// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "uotlab/config.hpp"
#include "uotlab/run_record.hpp"
#include "uotlab/svg_plot.hpp"

using namespace uotlab;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("minimal config fills every documented default and round-trips") {
  RunConfig cfg = parse_config_text(R"({"experiment": "mini"})", "inline");
  CHECK(cfg.experiment == "mini");
  CHECK(cfg.data.mode_count() == 3);
  CHECK(cfg.forget_mode == 0);
  CHECK(cfg.unlearn.cost.lambda == 1.0);
  CHECK(cfg.unlearn.cost.tau == 1.0);
  CHECK(cfg.unlearn.generator_lr == doctest::Approx(1.6e-4));
  CHECK(cfg.unlearn.potential_lr == doctest::Approx(1.0e-4));
  CHECK(cfg.unlearn.iterations == 5000);
  CHECK(cfg.unlearn.batch_b1 == 256);
  CHECK_FALSE(cfg.unlearn.ema_decay.has_value());
  CHECK(cfg.unlearn.psi1.kind == EntropyKind::KL);
  CHECK(cfg.unlearn.psi2.kind == EntropyKind::KL);
  CHECK(cfg.margin_auto);
  CHECK(cfg.baseline.gamma == doctest::Approx(0.005));
  CHECK(cfg.baseline.sparsity == doctest::Approx(0.95));
  CHECK(cfg.baseline.lambda_sa == doctest::Approx(5.0));
  CHECK(cfg.features.anchor_samples == 512);
  CHECK(cfg.eval.n_samples == 30000);

  const std::string dump = dump_resolved_config(cfg);
  RunConfig again = parse_config_text(dump, "resolved");
  CHECK(dump_resolved_config(again) == dump);
}

TEST_CASE("comments are allowed, unknown keys are rejected by name") {
  const char* text = R"({
    // comment-capable config
    "experiment": "c1",
    "unlearn": { "lambda": 2.0 }
  })";
  RunConfig cfg = parse_config_text(text, "inline");
  CHECK(cfg.unlearn.cost.lambda == 2.0);

  CHECK_THROWS_WITH_AS(parse_config_text(R"({"experiment": "x", "unlearn": {"lamda": 1.0}})", "inline"),
                       doctest::Contains("lamda"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"experiment": "x", "typo_section": {}})", "inline"),
                       doctest::Contains("typo_section"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config_text(R"({"master_seed": 1})", "inline"), doctest::Contains("experiment"),
                       ConfigError);
}

TEST_CASE("invariant violations name the offending key") {
  CHECK_THROWS_AS(parse_config_text(R"({"experiment": "x", "unlearn": {"lambda": -1.0}})", "inline"),
                  ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"experiment": "bad name!"})", "inline"), ConfigError);
  CHECK_THROWS_AS(parse_config_text(R"({"experiment": "x", "forget_mode": 7})", "inline"), ConfigError);
  CHECK_THROWS_AS(
      parse_config_text(
          R"({"experiment": "x", "data": {"dimension": 2, "modes": [{"center": [0, 1], "weight": 0.9, "sigma": 0.1}]}})",
          "inline"),
      ConfigError);
}

TEST_CASE("explicit margin disables calibration; null keeps it") {
  RunConfig with = parse_config_text(R"({"experiment": "m", "unlearn": {"margin": 0.34}})", "inline");
  CHECK_FALSE(with.margin_auto);
  CHECK(with.unlearn.cost.margin == doctest::Approx(0.34));

  RunConfig null_margin = parse_config_text(R"({"experiment": "m", "unlearn": {"margin": null}})", "inline");
  CHECK(null_margin.margin_auto);
}

TEST_CASE("lambda sweep derives configs differing only in the swept value") {
  RunConfig base = parse_config_text(R"({"experiment": "sweep"})", "inline");
  const std::string base_dump = dump_resolved_config(base);
  for (double value : {0.1, 1.0, 5.0}) {
    RunConfig derived = apply_override(base, "unlearn.lambda", value);
    CHECK(derived.unlearn.cost.lambda == doctest::Approx(value));
    RunConfig reset = apply_override(derived, "unlearn.lambda", base.unlearn.cost.lambda);
    CHECK(dump_resolved_config(reset) == base_dump);
  }
  CHECK_THROWS_WITH_AS(apply_override(base, "unlearn.does_not_exist", 1.0), doctest::Contains("does not resolve"),
                       ConfigError);
  CHECK_THROWS_AS(apply_override(base, "experiment", 1.0), ConfigError);  // not numeric
}

TEST_CASE("margin_scale sweep path resolves") {
  RunConfig base = parse_config_text(R"({"experiment": "sweep"})", "inline");
  RunConfig half = apply_override(base, "unlearn.margin_scale", 0.5);
  CHECK(half.margin_scale == doctest::Approx(0.5));
  CHECK(half.margin_auto == base.margin_auto);
}

TEST_CASE("sub-seeds derive from the master seed") {
  RunConfig a = parse_config_text(R"({"experiment": "s", "master_seed": 1})", "inline");
  RunConfig b = parse_config_text(R"({"experiment": "s", "master_seed": 2})", "inline");
  CHECK(a.unlearn.seed != b.unlearn.seed);
  CHECK(a.baseline.seed != b.baseline.seed);
  RunConfig a2 = parse_config_text(R"({"experiment": "s", "master_seed": 1})", "inline");
  CHECK(a.unlearn.seed == a2.unlearn.seed);
}

TEST_CASE("run record CSV round-trips") {
  std::vector<RunRecordRow> rows(3);
  rows[0] = {0, 0.0, 0.0, 0.31, 0, 0.0, 0.01, 0.012};
  rows[1] = {500, -0.12, 0.45, 0.22, 7, 55.5, 0.02, 0.02};
  rows[2] = {1000, -0.08, 0.31, 0.05, 7, 96.25, 0.015, 0.03};
  const std::string path = (std::filesystem::temp_directory_path() / "uotlab_record.csv").string();
  write_run_record_csv(path, rows);
  auto back = read_run_record_csv(path);
  REQUIRE(back.size() == 3);
  CHECK(back[1].iter == 500);
  CHECK(back[1].pul == doctest::Approx(55.5));
  CHECK(back[2].clamp_count == 7);
  CHECK(slurp(path).rfind("# uotlab run record v1", 0) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("scatter plot: valid empty output and deterministic bytes") {
  GmmSpec spec = GmmSpec::default_three_modes();
  const auto dir = std::filesystem::temp_directory_path();
  const std::string a = (dir / "uotlab_plot_a.svg").string();
  const std::string b = (dir / "uotlab_plot_b.svg").string();

  emit_scatter_plot(DenseMatrix(), spec, 0, a);
  std::string empty_svg = slurp(a);
  CHECK(empty_svg.find("<svg") != std::string::npos);
  CHECK(empty_svg.find("stroke-dasharray") != std::string::npos);  // forget-mode highlight

  DenseMatrix samples = samples_to_matrix(sample_gmm(spec, 500, 9));
  emit_scatter_plot(samples, spec, 0, a);
  emit_scatter_plot(samples, spec, 0, b);
  CHECK(slurp(a) == slurp(b));
  std::filesystem::remove(a);
  std::filesystem::remove(b);
}

TEST_CASE("cmd_unlearn without pretrain artifacts names the missing paths") {
  RunConfig cfg = parse_config_text(R"({"experiment": "missing"})", "inline");
  cfg.output_dir = (std::filesystem::temp_directory_path() / "uotlab_missing").string();
  std::filesystem::remove_all(cfg.output_dir);
  CHECK_THROWS_WITH_AS(cmd_unlearn(cfg), doctest::Contains("velocity.ckpt"), Error);
  CHECK_THROWS_WITH_AS(cmd_baseline(cfg, BaselineMethod::GA), doctest::Contains("generator.ckpt"), Error);
  std::filesystem::remove_all(cfg.output_dir);
}

TEST_CASE("manifest records hashes for every artifact") {
  const auto dir = std::filesystem::temp_directory_path() / "uotlab_manifest";
  std::filesystem::create_directories(dir);
  std::ofstream((dir / "a.txt").string()) << "alpha";
  std::ofstream((dir / "b.txt").string()) << "beta";
  write_manifest(dir.string(), "exp", "test", 0x1234, 99, {"a.txt", "b.txt"});
  const std::string manifest = slurp((dir / "manifest.json").string());
  CHECK(manifest.find("a.txt") != std::string::npos);
  CHECK(manifest.find("b.txt") != std::string::npos);
  CHECK(manifest.find("code_version") != std::string::npos);
  CHECK(manifest.find("0000000000001234") != std::string::npos);
  std::filesystem::remove_all(dir);
}
