// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "uotlab/config.hpp"

using namespace uotlab;

namespace {

RunConfig load(const std::string& config_path, const std::string& out_override, long seed_override) {
  RunConfig cfg = parse_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  if (seed_override >= 0) {
    // re-derive the per-module seeds from the overridden master seed
    std::string text = dump_resolved_config(cfg);
    cfg = parse_config_text(text, config_path + " (seed override)");
    cfg.master_seed = static_cast<uint64_t>(seed_override);
    cfg = parse_config_text(dump_resolved_config(cfg), config_path + " (seed override)");
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"uotlab: one-step flow-map unlearning laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  long seed = -1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run config (JSON, // comments allowed)")->required();
    cmd->add_option("--out", out_dir, "output directory override");
    cmd->add_option("--seed", seed, "master seed override");
  };

  CLI::App* pretrain = app.add_subcommand("pretrain", "train the velocity field and distill the one-step generator");
  add_common(pretrain);

  CLI::App* unlearn = app.add_subcommand("unlearn", "run UOT unlearning against the pretrained generator");
  add_common(unlearn);

  CLI::App* baseline = app.add_subcommand("baseline", "run a comparison unlearning method");
  add_common(baseline);
  std::string method = "vdu";
  baseline->add_option("--method", method, "ga | vdu | sa | salun")->required();

  CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a generator checkpoint");
  add_common(eval_cmd);
  std::string checkpoint, pre_checkpoint;
  eval_cmd->add_option("--checkpoint", checkpoint, "generator checkpoint to evaluate")->required();
  eval_cmd->add_option("--pre", pre_checkpoint, "pretrained checkpoint for the PUL baseline");

  CLI::App* oracle = app.add_subcommand("oracle-check", "run the discrete UOT oracle suite");
  add_common(oracle);

  CLI::App* sweep = app.add_subcommand("sweep", "run unlearning across a parameter grid");
  add_common(sweep);
  std::string param;
  std::vector<double> values;
  sweep->add_option("--param", param, "dotted config path, e.g. unlearn.lambda")->required();
  sweep->add_option("--values", values, "values to sweep")->required()->expected(-1);

  CLI::App* plot = app.add_subcommand("plot", "scatter plot of generator samples");
  add_common(plot);
  std::string plot_checkpoint, plot_out;
  int plot_n = 4000;
  plot->add_option("--checkpoint", plot_checkpoint, "generator checkpoint")->required();
  plot->add_option("--file", plot_out, "output SVG path")->required();
  plot->add_option("--n", plot_n, "sample count");

  CLI11_PARSE(app, argc, argv);

  try {
    RunConfig cfg = load(config_path, out_dir, seed);
    if (pretrain->parsed()) return cmd_pretrain(cfg);
    if (unlearn->parsed()) return cmd_unlearn(cfg);
    if (baseline->parsed()) return cmd_baseline(cfg, baseline_method_from_name(method));
    if (eval_cmd->parsed()) return cmd_eval(cfg, checkpoint, pre_checkpoint);
    if (oracle->parsed()) return cmd_oracle_check(cfg);
    if (sweep->parsed()) return cmd_sweep(cfg, param, values);
    if (plot->parsed()) return cmd_plot(cfg, plot_checkpoint, plot_out, plot_n);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
