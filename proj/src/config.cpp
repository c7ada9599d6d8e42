// SPDX-License-Identifier: Apache-2.0
#include "uotlab/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "uotlab/checkpoint.hpp"
#include "uotlab/discrete_uot.hpp"
#include "uotlab/run_record.hpp"
#include "uotlab/svg_plot.hpp"

namespace uotlab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown_keys(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(strf("%s: expected an object", path.c_str()));
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (const char* k : allowed) known = known || it.key() == k;
    if (!known) throw ConfigError(strf("unknown key '%s' in %s", it.key().c_str(), path.c_str()));
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback, const std::string& path) {
  if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(strf("bad value for '%s' in %s: %s", key, path.c_str(), e.what()));
  }
}

GmmSpec parse_data(const json& obj, const std::string& path) {
  reject_unknown_keys(obj, path, {"dimension", "modes"});
  GmmSpec spec;
  spec.dimension = get_or(obj, "dimension", 2, path);
  if (!obj.contains("modes")) throw ConfigError(strf("%s: 'modes' is required when 'data' is given", path.c_str()));
  for (size_t k = 0; k < obj.at("modes").size(); ++k) {
    const json& m = obj.at("modes").at(k);
    const std::string mpath = strf("%s.modes[%zu]", path.c_str(), k);
    reject_unknown_keys(m, mpath, {"center", "weight", "sigma"});
    GmmMode mode;
    mode.center = get_or(m, "center", std::vector<double>{}, mpath);
    mode.weight = get_or(m, "weight", 0.0, mpath);
    mode.sigma = get_or(m, "sigma", 0.1, mpath);
    spec.modes.push_back(std::move(mode));
  }
  spec.validate();
  return spec;
}

EntropyFn parse_entropy(const json& obj, const std::string& path, EntropyFn fallback) {
  reject_unknown_keys(obj, path, {"kind", "scale"});
  EntropyFn fn = fallback;
  fn.kind = entropy_kind_from_name(get_or<std::string>(obj, "kind", entropy_kind_name(fallback.kind), path));
  fn.scale = get_or(obj, "scale", fallback.scale, path);
  fn.validate();
  return fn;
}

bool filesystem_safe(const std::string& name) {
  if (name.empty()) return false;
  for (char c : name) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
                    c == '-' || c == '.';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

void RunConfig::validate() const {
  if (!filesystem_safe(experiment)) {
    throw ConfigError(strf("RunConfig: experiment name '%s' is empty or not filesystem-safe", experiment.c_str()));
  }
  data.validate();
  if (forget_mode < 0 || forget_mode >= data.mode_count()) {
    throw ConfigError(strf("RunConfig: forget_mode %d out of range", forget_mode));
  }
  if (margin_scale <= 0.0) throw ConfigError("RunConfig: margin_scale must be positive");
  unlearn.validate();
  baseline.validate();
  if (eval.n_samples < data.dimension + 2) throw ConfigError("RunConfig: eval.n_samples too small");
  if (eval.k_sigma <= 0.0) throw ConfigError("RunConfig: eval.k_sigma must be positive");
  if (features.anchor_samples < 1) throw ConfigError("RunConfig: features.anchor_samples must be >= 1");
  if (features.margin_holdout_samples < 1) {
    throw ConfigError("RunConfig: features.margin_holdout_samples must be >= 1");
  }
}

std::string RunConfig::pretrain_dir() const {
  return (fs::path(output_dir) / experiment / "pretrain").string();
}
std::string RunConfig::unlearn_dir() const {
  return (fs::path(output_dir) / experiment / "unlearn").string();
}
std::string RunConfig::baseline_dir(BaselineMethod method) const {
  return (fs::path(output_dir) / experiment / "baseline" / baseline_method_name(method)).string();
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(strf("parse_config: missing config file '%s'", path.c_str()));
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config_text(text, path);
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  json root;
  try {
    root = json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::exception& e) {
    throw ConfigError(strf("parse_config: %s: %s", origin.c_str(), e.what()));
  }
  reject_unknown_keys(root, origin,
                      {"experiment", "master_seed", "data", "forget_mode", "pretrain", "features", "unlearn",
                       "baseline", "eval", "output_dir"});
  RunConfig cfg;
  if (!root.contains("experiment")) throw ConfigError(strf("%s: 'experiment' is required", origin.c_str()));
  cfg.experiment = root.at("experiment").get<std::string>();
  cfg.master_seed = get_or<uint64_t>(root, "master_seed", cfg.master_seed, origin);
  if (root.contains("data")) cfg.data = parse_data(root.at("data"), origin + ".data");
  cfg.forget_mode = get_or(root, "forget_mode", 0, origin);

  if (root.contains("pretrain")) {
    const json& p = root.at("pretrain");
    const std::string path = origin + ".pretrain";
    reject_unknown_keys(p, path,
                        {"cfm_iterations", "cfm_lr", "cfm_lr_final", "distill_iterations", "distill_lr",
                         "distill_lr_final", "batch", "teacher_steps", "teacher_pool", "holdout",
                         "velocity_hidden", "generator_hidden"});
    cfg.pretrain.cfm_iterations = get_or(p, "cfm_iterations", cfg.pretrain.cfm_iterations, path);
    cfg.pretrain.cfm_lr = get_or(p, "cfm_lr", cfg.pretrain.cfm_lr, path);
    cfg.pretrain.cfm_lr_final = get_or(p, "cfm_lr_final", cfg.pretrain.cfm_lr_final, path);
    cfg.pretrain.distill_lr_final = get_or(p, "distill_lr_final", cfg.pretrain.distill_lr_final, path);
    cfg.pretrain.distill_iterations = get_or(p, "distill_iterations", cfg.pretrain.distill_iterations, path);
    cfg.pretrain.distill_lr = get_or(p, "distill_lr", cfg.pretrain.distill_lr, path);
    cfg.pretrain.batch = get_or(p, "batch", cfg.pretrain.batch, path);
    cfg.pretrain.teacher_steps = get_or(p, "teacher_steps", cfg.pretrain.teacher_steps, path);
    cfg.pretrain.teacher_pool = get_or(p, "teacher_pool", cfg.pretrain.teacher_pool, path);
    cfg.pretrain.holdout = get_or(p, "holdout", cfg.pretrain.holdout, path);
    cfg.pretrain.velocity_hidden = get_or(p, "velocity_hidden", cfg.pretrain.velocity_hidden, path);
    cfg.pretrain.generator_hidden = get_or(p, "generator_hidden", cfg.pretrain.generator_hidden, path);
  }

  if (root.contains("features")) {
    const json& f = root.at("features");
    const std::string path = origin + ".features";
    reject_unknown_keys(f, path,
                        {"kind", "hidden_width", "hidden_layers", "train_samples", "holdout_samples",
                         "iterations", "batch", "lr", "accuracy_floor", "anchor_samples",
                         "margin_holdout_samples"});
    cfg.features.kind =
        feature_kind_from_name(get_or<std::string>(f, "kind", feature_kind_name(cfg.features.kind), path));
    cfg.features.hidden_width = get_or(f, "hidden_width", cfg.features.hidden_width, path);
    cfg.features.hidden_layers = get_or(f, "hidden_layers", cfg.features.hidden_layers, path);
    cfg.features.train_samples = get_or(f, "train_samples", cfg.features.train_samples, path);
    cfg.features.holdout_samples = get_or(f, "holdout_samples", cfg.features.holdout_samples, path);
    cfg.features.iterations = get_or(f, "iterations", cfg.features.iterations, path);
    cfg.features.batch = get_or(f, "batch", cfg.features.batch, path);
    cfg.features.lr = get_or(f, "lr", cfg.features.lr, path);
    cfg.features.accuracy_floor = get_or(f, "accuracy_floor", cfg.features.accuracy_floor, path);
    cfg.features.anchor_samples = get_or(f, "anchor_samples", cfg.features.anchor_samples, path);
    cfg.features.margin_holdout_samples =
        get_or(f, "margin_holdout_samples", cfg.features.margin_holdout_samples, path);
  }

  if (root.contains("unlearn")) {
    const json& u = root.at("unlearn");
    const std::string path = origin + ".unlearn";
    reject_unknown_keys(u, path,
                        {"lambda", "tau", "margin", "margin_scale", "distance", "psi1", "psi2", "batch",
                         "generator_lr", "potential_lr", "iterations", "ema_decay", "eval_every",
                         "clamp_mult", "potential_hidden", "nonfinite_limit"});
    cfg.unlearn.cost.lambda = get_or(u, "lambda", cfg.unlearn.cost.lambda, path);
    cfg.unlearn.cost.tau = get_or(u, "tau", cfg.unlearn.cost.tau, path);
    if (u.contains("margin") && !u.at("margin").is_null()) {
      cfg.margin_auto = false;
      cfg.unlearn.cost.margin = u.at("margin").get<double>();
    }
    cfg.margin_scale = get_or(u, "margin_scale", cfg.margin_scale, path);
    cfg.unlearn.cost.distance = distance_kind_from_name(
        get_or<std::string>(u, "distance", distance_kind_name(cfg.unlearn.cost.distance), path));
    if (u.contains("psi1")) cfg.unlearn.psi1 = parse_entropy(u.at("psi1"), path + ".psi1", cfg.unlearn.psi1);
    if (u.contains("psi2")) cfg.unlearn.psi2 = parse_entropy(u.at("psi2"), path + ".psi2", cfg.unlearn.psi2);
    const int batch = get_or(u, "batch", cfg.unlearn.batch_b1, path);
    cfg.unlearn.batch_b1 = cfg.unlearn.batch_b2 = cfg.unlearn.batch_b3 = batch;
    cfg.unlearn.generator_lr = get_or(u, "generator_lr", cfg.unlearn.generator_lr, path);
    cfg.unlearn.potential_lr = get_or(u, "potential_lr", cfg.unlearn.potential_lr, path);
    cfg.unlearn.iterations = get_or(u, "iterations", cfg.unlearn.iterations, path);
    if (u.contains("ema_decay") && !u.at("ema_decay").is_null()) {
      cfg.unlearn.ema_decay = u.at("ema_decay").get<double>();
    }
    cfg.unlearn.eval_every = get_or(u, "eval_every", cfg.unlearn.eval_every, path);
    cfg.unlearn.clamp_mult = get_or(u, "clamp_mult", cfg.unlearn.clamp_mult, path);
    cfg.unlearn.potential_hidden = get_or(u, "potential_hidden", cfg.unlearn.potential_hidden, path);
    cfg.unlearn.nonfinite_limit = get_or(u, "nonfinite_limit", cfg.unlearn.nonfinite_limit, path);
  }

  if (root.contains("baseline")) {
    const json& b = root.at("baseline");
    const std::string path = origin + ".baseline";
    reject_unknown_keys(b, path,
                        {"method", "iterations", "lr", "gamma", "alpha", "beta", "lambda_sa", "sparsity",
                         "pseudo_set_size", "batch", "teacher_steps", "fim_samples", "stat_segments",
                         "stat_steps_per_segment", "stat_lr", "stat_batch", "eval_every"});
    cfg.baseline.method = baseline_method_from_name(
        get_or<std::string>(b, "method", baseline_method_name(cfg.baseline.method), path));
    cfg.baseline.iterations = get_or(b, "iterations", cfg.baseline.iterations, path);
    cfg.baseline.lr = get_or(b, "lr", cfg.baseline.lr, path);
    cfg.baseline.gamma = get_or(b, "gamma", cfg.baseline.gamma, path);
    cfg.baseline.alpha = get_or(b, "alpha", cfg.baseline.alpha, path);
    cfg.baseline.beta = get_or(b, "beta", cfg.baseline.beta, path);
    cfg.baseline.lambda_sa = get_or(b, "lambda_sa", cfg.baseline.lambda_sa, path);
    cfg.baseline.sparsity = get_or(b, "sparsity", cfg.baseline.sparsity, path);
    cfg.baseline.pseudo_set_size = get_or(b, "pseudo_set_size", cfg.baseline.pseudo_set_size, path);
    cfg.baseline.batch = get_or(b, "batch", cfg.baseline.batch, path);
    cfg.baseline.teacher_steps = get_or(b, "teacher_steps", cfg.baseline.teacher_steps, path);
    cfg.baseline.fim_samples = get_or(b, "fim_samples", cfg.baseline.fim_samples, path);
    cfg.baseline.stat_segments = get_or(b, "stat_segments", cfg.baseline.stat_segments, path);
    cfg.baseline.stat_steps_per_segment =
        get_or(b, "stat_steps_per_segment", cfg.baseline.stat_steps_per_segment, path);
    cfg.baseline.stat_lr = get_or(b, "stat_lr", cfg.baseline.stat_lr, path);
    cfg.baseline.stat_batch = get_or(b, "stat_batch", cfg.baseline.stat_batch, path);
    cfg.baseline.eval_every = get_or(b, "eval_every", cfg.baseline.eval_every, path);
  }

  if (root.contains("eval")) {
    const json& e = root.at("eval");
    const std::string path = origin + ".eval";
    reject_unknown_keys(e, path, {"n_samples", "k_sigma"});
    cfg.eval.n_samples = get_or(e, "n_samples", cfg.eval.n_samples, path);
    cfg.eval.k_sigma = get_or(e, "k_sigma", cfg.eval.k_sigma, path);
  }

  cfg.output_dir = get_or<std::string>(root, "output_dir", cfg.output_dir, origin);

  // per-module seeds derive from the master seed
  cfg.unlearn.seed = derive_seed(cfg.master_seed, "unlearn");
  cfg.baseline.seed = derive_seed(cfg.master_seed, "baseline");
  cfg.eval.seed = derive_seed(cfg.master_seed, "eval");

  cfg.validate();
  return cfg;
}

std::string dump_resolved_config(const RunConfig& cfg) {
  json root;
  root["experiment"] = cfg.experiment;
  root["master_seed"] = cfg.master_seed;
  json data;
  data["dimension"] = cfg.data.dimension;
  data["modes"] = json::array();
  for (const auto& m : cfg.data.modes) {
    data["modes"].push_back({{"center", m.center}, {"weight", m.weight}, {"sigma", m.sigma}});
  }
  root["data"] = data;
  root["forget_mode"] = cfg.forget_mode;
  root["pretrain"] = {{"cfm_iterations", cfg.pretrain.cfm_iterations},
                      {"cfm_lr", cfg.pretrain.cfm_lr},
                      {"cfm_lr_final", cfg.pretrain.cfm_lr_final},
                      {"distill_iterations", cfg.pretrain.distill_iterations},
                      {"distill_lr", cfg.pretrain.distill_lr},
                      {"distill_lr_final", cfg.pretrain.distill_lr_final},
                      {"batch", cfg.pretrain.batch},
                      {"teacher_steps", cfg.pretrain.teacher_steps},
                      {"teacher_pool", cfg.pretrain.teacher_pool},
                      {"holdout", cfg.pretrain.holdout},
                      {"velocity_hidden", cfg.pretrain.velocity_hidden},
                      {"generator_hidden", cfg.pretrain.generator_hidden}};
  root["features"] = {{"kind", feature_kind_name(cfg.features.kind)},
                      {"hidden_width", cfg.features.hidden_width},
                      {"hidden_layers", cfg.features.hidden_layers},
                      {"train_samples", cfg.features.train_samples},
                      {"holdout_samples", cfg.features.holdout_samples},
                      {"iterations", cfg.features.iterations},
                      {"batch", cfg.features.batch},
                      {"lr", cfg.features.lr},
                      {"accuracy_floor", cfg.features.accuracy_floor},
                      {"anchor_samples", cfg.features.anchor_samples},
                      {"margin_holdout_samples", cfg.features.margin_holdout_samples}};
  json unlearn;
  unlearn["lambda"] = cfg.unlearn.cost.lambda;
  unlearn["tau"] = cfg.unlearn.cost.tau;
  if (cfg.margin_auto) {
    unlearn["margin"] = nullptr;
  } else {
    unlearn["margin"] = cfg.unlearn.cost.margin;
  }
  unlearn["margin_scale"] = cfg.margin_scale;
  unlearn["distance"] = distance_kind_name(cfg.unlearn.cost.distance);
  unlearn["psi1"] = {{"kind", entropy_kind_name(cfg.unlearn.psi1.kind)}, {"scale", cfg.unlearn.psi1.scale}};
  unlearn["psi2"] = {{"kind", entropy_kind_name(cfg.unlearn.psi2.kind)}, {"scale", cfg.unlearn.psi2.scale}};
  unlearn["batch"] = cfg.unlearn.batch_b1;
  unlearn["generator_lr"] = cfg.unlearn.generator_lr;
  unlearn["potential_lr"] = cfg.unlearn.potential_lr;
  unlearn["iterations"] = cfg.unlearn.iterations;
  if (cfg.unlearn.ema_decay.has_value()) {
    unlearn["ema_decay"] = *cfg.unlearn.ema_decay;
  } else {
    unlearn["ema_decay"] = nullptr;
  }
  unlearn["eval_every"] = cfg.unlearn.eval_every;
  unlearn["clamp_mult"] = cfg.unlearn.clamp_mult;
  unlearn["potential_hidden"] = cfg.unlearn.potential_hidden;
  unlearn["nonfinite_limit"] = cfg.unlearn.nonfinite_limit;
  root["unlearn"] = unlearn;
  root["baseline"] = {{"method", baseline_method_name(cfg.baseline.method)},
                      {"iterations", cfg.baseline.iterations},
                      {"lr", cfg.baseline.lr},
                      {"gamma", cfg.baseline.gamma},
                      {"alpha", cfg.baseline.alpha},
                      {"beta", cfg.baseline.beta},
                      {"lambda_sa", cfg.baseline.lambda_sa},
                      {"sparsity", cfg.baseline.sparsity},
                      {"pseudo_set_size", cfg.baseline.pseudo_set_size},
                      {"batch", cfg.baseline.batch},
                      {"teacher_steps", cfg.baseline.teacher_steps},
                      {"fim_samples", cfg.baseline.fim_samples},
                      {"stat_segments", cfg.baseline.stat_segments},
                      {"stat_steps_per_segment", cfg.baseline.stat_steps_per_segment},
                      {"stat_lr", cfg.baseline.stat_lr},
                      {"stat_batch", cfg.baseline.stat_batch},
                      {"eval_every", cfg.baseline.eval_every}};
  root["eval"] = {{"n_samples", cfg.eval.n_samples}, {"k_sigma", cfg.eval.k_sigma}};
  root["output_dir"] = cfg.output_dir;
  return root.dump(2) + "\n";
}

RunConfig apply_override(const RunConfig& base, const std::string& dotted_path, double value) {
  json root = json::parse(dump_resolved_config(base));
  std::vector<std::string> parts;
  std::string token;
  for (char c : dotted_path) {
    if (c == '.') {
      parts.push_back(token);
      token.clear();
    } else {
      token.push_back(c);
    }
  }
  parts.push_back(token);
  json* node = &root;
  for (size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object() || !node->contains(parts[i])) {
      throw ConfigError(strf("apply_override: path '%s' does not resolve", dotted_path.c_str()));
    }
    node = &node->at(parts[i]);
  }
  const std::string& leaf = parts.back();
  if (!node->is_object() || !node->contains(leaf)) {
    throw ConfigError(strf("apply_override: path '%s' does not resolve", dotted_path.c_str()));
  }
  json& slot = node->at(leaf);
  if (!slot.is_number() && !slot.is_null()) {
    throw ConfigError(strf("apply_override: path '%s' is not numeric", dotted_path.c_str()));
  }
  slot = value;
  return parse_config_text(root.dump(), strf("override(%s)", dotted_path.c_str()));
}

PreparedUnlearn prepare_unlearn_inputs(const RunConfig& config, const OneStepGenerator& g_pre,
                                       DataSource& source) {
  PreparedUnlearn prepared;
  if (config.features.kind == FeatureKind::RawIdentity) {
    prepared.extractor = FeatureExtractor::raw_identity(g_pre.data_dim);
  } else {
    ClassifierTrainConfig ctc;
    ctc.train_samples = config.features.train_samples;
    ctc.holdout_samples = config.features.holdout_samples;
    ctc.iterations = config.features.iterations;
    ctc.batch = config.features.batch;
    ctc.lr = config.features.lr;
    ctc.accuracy_floor = config.features.accuracy_floor;
    ctc.k_sigma = config.eval.k_sigma;
    ctc.hidden_width = config.features.hidden_width;
    ctc.hidden_layers = config.features.hidden_layers;
    ctc.seed = derive_seed(config.master_seed, "features.classifier");
    prepared.extractor = train_feature_classifier(g_pre, config.data, ctc);
  }

  const long before = source.access_count();
  DenseMatrix anchor_draws = source.sample_mode(config.forget_mode, config.features.anchor_samples,
                                                derive_seed(config.master_seed, "features.anchor"));
  prepared.anchor = compute_anchor(prepared.extractor, anchor_draws);

  if (config.margin_auto) {
    DenseMatrix holdout = source.sample_mode(config.forget_mode, config.features.margin_holdout_samples,
                                             derive_seed(config.master_seed, "features.margin"));
    prepared.margin =
        calibrate_margin(prepared.extractor, prepared.anchor, holdout, config.unlearn.cost.distance);
  } else {
    prepared.margin = config.unlearn.cost.margin;
  }
  prepared.margin *= config.margin_scale;
  prepared.anchor_data_accesses = source.access_count() - before;
  return prepared;
}

PretrainArtifacts load_pretrain_artifacts(const RunConfig& config) {
  const fs::path dir(config.pretrain_dir());
  const fs::path velocity_path = dir / "velocity.ckpt";
  const fs::path generator_path = dir / "generator.ckpt";
  if (!fs::exists(velocity_path) || !fs::exists(generator_path)) {
    throw Error(strf("missing pretrain artifacts; expected '%s' and '%s' (run `lab pretrain` first)",
                     velocity_path.string().c_str(), generator_path.string().c_str()));
  }
  Checkpoint vel = load_checkpoint(velocity_path.string());
  Checkpoint gen = load_checkpoint(generator_path.string());
  PretrainArtifacts artifacts;
  artifacts.velocity = VelocityField{vel.spec, vel.params, vel.spec.output_width()};
  artifacts.velocity.validate();
  artifacts.generator = OneStepGenerator{gen.spec, gen.params, std::nullopt, gen.spec.input_width()};
  artifacts.generator.validate();
  return artifacts;
}

namespace {

void dump_dataset_csv(const std::string& path, const GmmSpec& spec, int n, uint64_t seed) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(strf("cannot open '%s'", path.c_str()));
  out << "x0,x1,mode\n";
  for (const auto& s : sample_gmm(spec, n, seed)) {
    out << strf("%.10g,%.10g,%d\n", s.point[0], s.point[1], s.mode_index);
  }
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(strf("cannot open '%s'", path.c_str()));
  out << text;
}

json report_to_json(const EvalReport& report) {
  return {{"pul_percent", report.pul_percent},
          {"frechet_full", report.frechet_full},
          {"frechet_retain", report.frechet_retain},
          {"mode_masses", report.mode_masses},
          {"oos_mass", report.oos_mass},
          {"forget_count", report.forget_count},
          {"n_samples", report.n_samples},
          {"seed", report.seed}};
}

void print_report(const char* tag, const EvalReport& report) {
  std::printf("%s: pul %.2f%% oos %.4f frechet_full %.4f frechet_retain %.4f forget_count %ld\n", tag,
              report.pul_percent, report.oos_mass, report.frechet_full, report.frechet_retain,
              report.forget_count);
}

void save_anchor_json(const std::string& path, const PreparedUnlearn& prepared, const RunConfig& config) {
  json anchor;
  anchor["mu_f"] = prepared.anchor.mu_f;
  anchor["source_sample_count"] = prepared.anchor.source_sample_count;
  anchor["margin"] = prepared.margin;
  anchor["distance"] = distance_kind_name(config.unlearn.cost.distance);
  anchor["feature_kind"] = feature_kind_name(prepared.extractor.kind);
  anchor["holdout_accuracy"] = prepared.extractor.holdout_accuracy;
  anchor["anchor_data_accesses"] = prepared.anchor_data_accesses;
  write_text(path, anchor.dump(2) + "\n");
}

}  // namespace

int cmd_pretrain(const RunConfig& config) {
  config.validate();
  const fs::path dir(config.pretrain_dir());
  fs::create_directories(dir);
  DataSource source(config.data);

  BatchSampler data = [&source](int n, Rng& rng) { return source.sample(n, rng.next_u64()); };
  BatchSampler prior = normal_prior_sampler(config.data.dimension);

  CfmConfig cfm_cfg;
  cfm_cfg.iterations = config.pretrain.cfm_iterations;
  cfm_cfg.lr = config.pretrain.cfm_lr;
  cfm_cfg.lr_final = config.pretrain.cfm_lr_final;
  cfm_cfg.batch = config.pretrain.batch;
  cfm_cfg.hidden_widths = config.pretrain.velocity_hidden;
  cfm_cfg.seed = derive_seed(config.master_seed, "pretrain.cfm");
  CfmResult cfm = cfm_train_velocity(data, prior, config.data.dimension, cfm_cfg);
  std::printf("pretrain: cfm done, final loss %.6f\n", cfm.final_loss);

  DistillConfig distill_cfg;
  distill_cfg.iterations = config.pretrain.distill_iterations;
  distill_cfg.lr = config.pretrain.distill_lr;
  distill_cfg.lr_final = config.pretrain.distill_lr_final;
  distill_cfg.batch = config.pretrain.batch;
  distill_cfg.teacher_steps = config.pretrain.teacher_steps;
  distill_cfg.pool_size = config.pretrain.teacher_pool;
  distill_cfg.holdout_size = config.pretrain.holdout;
  distill_cfg.hidden_widths = config.pretrain.generator_hidden;
  distill_cfg.seed = derive_seed(config.master_seed, "pretrain.distill");
  DistillResult distill = distill_flowmap(cfm.field, prior, distill_cfg);
  std::printf("pretrain: distill done, residual train %.6g holdout %.6g\n", distill.train_residual,
              distill.holdout_residual);

  save_checkpoint((dir / "velocity.ckpt").string(),
                  {cfm.field.spec, cfm.field.params, cfm_cfg.seed, cfm_cfg.iterations});
  save_checkpoint((dir / "generator.ckpt").string(),
                  {distill.generator.spec, distill.generator.params, distill_cfg.seed, distill_cfg.iterations});

  std::ofstream losses((dir / "pretrain_losses.csv").string(), std::ios::trunc);
  losses << "phase,iter,loss\n";
  for (const auto& [iter, loss] : cfm.loss_log) losses << strf("cfm,%ld,%.10g\n", iter, loss);
  for (const auto& [iter, loss] : distill.loss_log) losses << strf("distill,%ld,%.10g\n", iter, loss);
  losses.close();

  dump_dataset_csv((dir / "dataset.csv").string(), config.data, 5000,
                   derive_seed(config.master_seed, "pretrain.dataset_dump"));

  EvalReport report = evaluate(distill.generator, std::nullopt, config.data, config.forget_mode, config.eval);
  print_report("pretrain", report);
  emit_scatter_plot(generate(distill.generator, 4000, derive_seed(config.master_seed, "pretrain.plot")),
                    config.data, config.forget_mode, (dir / "samples.svg").string());

  json meta;
  meta["resolved_config_hash"] =
      strf("%016llx", static_cast<unsigned long long>(fnv1a64_str(dump_resolved_config(config))));
  meta["cfm_final_loss"] = cfm.final_loss;
  meta["distill_train_residual"] = distill.train_residual;
  meta["distill_holdout_residual"] = distill.holdout_residual;
  meta["data_accesses"] = source.access_count();
  meta["report"] = report_to_json(report);
  meta["master_seed"] = config.master_seed;
  write_text((dir / "pretrain_meta.json").string(), meta.dump(2) + "\n");
  write_text((dir / "resolved_config.json").string(), dump_resolved_config(config));

  write_manifest(dir.string(), config.experiment, "pretrain", fnv1a64_str(dump_resolved_config(config)),
                 config.master_seed,
                 {"velocity.ckpt", "generator.ckpt", "pretrain_losses.csv", "dataset.csv", "samples.svg",
                  "pretrain_meta.json", "resolved_config.json"});
  return 0;
}

int cmd_unlearn(const RunConfig& config) {
  config.validate();
  PretrainArtifacts pretrain = load_pretrain_artifacts(config);
  const fs::path dir(config.unlearn_dir());
  fs::create_directories(dir);

  DataSource source(config.data);
  PreparedUnlearn prepared = prepare_unlearn_inputs(config, pretrain.generator, source);
  std::printf("unlearn: extractor accuracy %.4f margin %.4f (anchor from %ld real draws)\n",
              prepared.extractor.holdout_accuracy, prepared.margin, prepared.anchor_data_accesses);

  UnlearnConfig trainer_cfg = config.unlearn;
  trainer_cfg.cost.margin = prepared.margin;

  const long accesses_before_run = source.access_count();
  UnlearnRunResult result = run_unlearn(pretrain.generator, prepared.extractor, prepared.anchor, trainer_cfg,
                                        config.data, config.forget_mode, config.eval, dir.string());
  if (source.access_count() != accesses_before_run) {
    std::fprintf(stderr, "unlearn: data-free contract violated (%ld extra real draws)\n",
                 source.access_count() - accesses_before_run);
    return 1;
  }
  print_report("unlearn", result.final_report);

  if (prepared.extractor.kind == FeatureKind::ClassifierPenultimate) {
    save_checkpoint((dir / "extractor.ckpt").string(),
                    {prepared.extractor.classifier_spec, prepared.extractor.classifier_params,
                     derive_seed(config.master_seed, "features.classifier"), config.features.iterations});
  }
  save_anchor_json((dir / "anchor.json").string(), prepared, config);
  write_text((dir / "resolved_config.json").string(), dump_resolved_config(config));
  write_text((dir / "final_report.json").string(), report_to_json(result.final_report).dump(2) + "\n");
  emit_scatter_plot(generate(result.generator, 4000, derive_seed(config.master_seed, "unlearn.plot")),
                    config.data, config.forget_mode, (dir / "samples.svg").string());

  std::vector<std::string> artifacts = {"record.csv", "gtheta_final.ckpt", "anchor.json",
                                        "resolved_config.json", "final_report.json", "samples.svg"};
  if (prepared.extractor.kind == FeatureKind::ClassifierPenultimate) artifacts.push_back("extractor.ckpt");
  write_manifest(dir.string(), config.experiment, "unlearn", fnv1a64_str(dump_resolved_config(config)),
                 config.master_seed, artifacts);
  return 0;
}

int cmd_baseline(const RunConfig& config, BaselineMethod method) {
  config.validate();
  PretrainArtifacts pretrain = load_pretrain_artifacts(config);
  const fs::path dir(config.baseline_dir(method));
  fs::create_directories(dir);

  DataSource source(config.data);
  PreparedUnlearn prepared = prepare_unlearn_inputs(config, pretrain.generator, source);
  CostConfig cost_cfg = config.unlearn.cost;
  cost_cfg.margin = prepared.margin;

  BaselineConfig bc = config.baseline;
  bc.method = method;
  PseudoSets pseudo = build_pseudo_sets(pretrain.generator, prepared.extractor, prepared.anchor, cost_cfg,
                                        bc.pseudo_set_size, derive_seed(config.master_seed, "baseline.pseudo"));
  std::printf("baseline %s: pseudo sets forget %d retain %d\n", baseline_method_name(method),
              pseudo.forget_noise.rows, pseudo.retain_noise.rows);

  EvalReport pre_report = evaluate(pretrain.generator, std::nullopt, config.data, config.forget_mode, config.eval);
  std::vector<RunRecordRow> rows;
  RunRecordRow row0;
  row0.iter = 0;
  row0.frechet_retain = pre_report.frechet_retain;
  row0.oos_mass = pre_report.oos_mass;
  rows.push_back(row0);

  EvalReport last_report = pre_report;
  BaselineEvalHook hook = [&](long iter, const OneStepGenerator& current, double loss) {
    EvalReport report = evaluate(current, pre_report.forget_count, config.data, config.forget_mode, config.eval);
    RunRecordRow row;
    row.iter = iter;
    row.gen_loss = loss;
    row.pul = report.pul_percent;
    row.frechet_retain = report.frechet_retain;
    row.oos_mass = report.oos_mass;
    rows.push_back(row);
    last_report = report;
  };

  OneStepGenerator result = pretrain.generator;
  switch (method) {
    case BaselineMethod::GA:
      result = ga_unlearn(pretrain.generator, pretrain.velocity, pseudo.forget_noise, bc, hook);
      break;
    case BaselineMethod::VDU: {
      ParamStatistics stats = compute_param_statistics(pretrain.generator, pretrain.velocity, bc);
      result = vdu_unlearn(pretrain.generator, pretrain.velocity, stats, pseudo.forget_noise, bc, hook);
      break;
    }
    case BaselineMethod::SA: {
      DenseMatrix fim_noise(pseudo.forget_noise.rows + pseudo.retain_noise.rows, pseudo.forget_noise.cols);
      for (int r = 0; r < pseudo.forget_noise.rows; ++r) {
        std::copy(pseudo.forget_noise.row(r).begin(), pseudo.forget_noise.row(r).end(), fim_noise.row(r).begin());
      }
      for (int r = 0; r < pseudo.retain_noise.rows; ++r) {
        std::copy(pseudo.retain_noise.row(r).begin(), pseudo.retain_noise.row(r).end(),
                  fim_noise.row(pseudo.forget_noise.rows + r).begin());
      }
      ParamStore fim = compute_fim(pretrain.generator, pretrain.velocity, fim_noise, bc);
      result = sa_unlearn(pretrain.generator, pretrain.velocity, pseudo, fim, bc, hook);
      break;
    }
    case BaselineMethod::SalUn:
      result = salun_unlearn(pretrain.generator, pretrain.velocity, pseudo, bc, hook);
      break;
  }
  print_report(baseline_method_name(method), last_report);

  write_run_record_csv((dir / "record.csv").string(), rows);
  save_checkpoint((dir / "final.ckpt").string(), {result.spec, result.params, bc.seed, bc.iterations});
  write_text((dir / "resolved_config.json").string(), dump_resolved_config(config));
  write_text((dir / "final_report.json").string(), report_to_json(last_report).dump(2) + "\n");
  write_manifest(dir.string(), config.experiment, strf("baseline-%s", baseline_method_name(method)),
                 fnv1a64_str(dump_resolved_config(config)), config.master_seed,
                 {"record.csv", "final.ckpt", "resolved_config.json", "final_report.json"});
  return 0;
}

int cmd_eval(const RunConfig& config, const std::string& checkpoint_path,
             const std::string& pre_checkpoint_path) {
  config.validate();
  if (!fs::exists(checkpoint_path)) {
    throw Error(strf("cmd_eval: missing checkpoint '%s'", checkpoint_path.c_str()));
  }
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  OneStepGenerator gen{ckpt.spec, ckpt.params, std::nullopt, ckpt.spec.input_width()};

  std::optional<long> baseline_count;
  if (!pre_checkpoint_path.empty()) {
    Checkpoint pre = load_checkpoint(pre_checkpoint_path);
    OneStepGenerator pre_gen{pre.spec, pre.params, std::nullopt, pre.spec.input_width()};
    baseline_count = evaluate(pre_gen, std::nullopt, config.data, config.forget_mode, config.eval).forget_count;
  }
  EvalReport report = evaluate(gen, baseline_count, config.data, config.forget_mode, config.eval);
  print_report("eval", report);

  const fs::path dir = fs::path(config.output_dir) / config.experiment / "eval";
  fs::create_directories(dir);
  write_text((dir / "eval_report.json").string(), report_to_json(report).dump(2) + "\n");
  write_manifest(dir.string(), config.experiment, "eval", fnv1a64_str(dump_resolved_config(config)),
                 config.master_seed, {"eval_report.json"});
  return 0;
}

int cmd_oracle_check(const RunConfig& config) {
  config.validate();
  const fs::path dir = fs::path(config.output_dir) / config.experiment / "oracle-check";
  fs::create_directories(dir);
  std::ofstream csv((dir / "oracle_results.csv").string(), std::ios::trunc);
  csv << "instance,rows,cols,max_plan_diff,marginal_dev,marginal_dev_x10,pass\n";

  const EntropyFn kl1{EntropyKind::KL, 1.0};
  const EntropyFn kl10{EntropyKind::KL, 10.0};
  Rng rng(2025);
  bool all_pass = true;
  for (int t = 0; t < 50; ++t) {
    const int n = 2 + rng.index(2);
    const int m = 2 + rng.index(3);
    std::vector<double> mu(static_cast<size_t>(n)), nu(static_cast<size_t>(m));
    for (double& v : mu) v = 0.2 + rng.uniform();
    for (double& v : nu) v = 0.2 + rng.uniform();
    DenseMatrix cost(n, m);
    for (double& v : cost.data) v = rng.uniform();

    TransportPlan sink = solve_uot_sinkhorn(mu, nu, cost, kl1, kl1, {});
    TransportPlan brute = solve_uot_bruteforce(mu, nu, cost, kl1, kl1, {});
    double max_diff = 0.0;
    for (size_t k = 0; k < sink.pi.data.size(); ++k) {
      max_diff = std::max(max_diff, std::fabs(sink.pi.data[k] - brute.pi.data[k]));
    }
    auto deviation = [&](const TransportPlan& plan) {
      double dev = 0.0;
      for (size_t i = 0; i < mu.size(); ++i) dev += std::fabs(plan.row_marginals[i] - mu[i]);
      for (size_t j = 0; j < nu.size(); ++j) dev += std::fabs(plan.col_marginals[j] - nu[j]);
      return dev;
    };
    const double dev1 = deviation(sink);
    const double dev10 = deviation(solve_uot_sinkhorn(mu, nu, cost, kl10, kl10, {}));
    const bool pass = max_diff < 1e-4 && dev10 <= dev1 + 1e-9;
    all_pass = all_pass && pass;
    csv << strf("%d,%d,%d,%.3e,%.6f,%.6f,%s\n", t, n, m, max_diff, dev1, dev10, pass ? "pass" : "FAIL");
    std::printf("oracle %2d (%dx%d): plan diff %.3e dev %.4f -> %.4f %s\n", t, n, m, max_diff, dev1, dev10,
                pass ? "pass" : "FAIL");
  }

  // zero-cost, huge-scale instance recovers exact marginals
  {
    const EntropyFn huge{EntropyKind::KL, 1e6};
    std::vector<double> mu = {0.5, 0.5}, nu = {0.5, 0.5};
    DenseMatrix cost(2, 2);
    SinkhornOptions opt;
    opt.epsilon = 1e-3;
    TransportPlan plan = solve_uot_sinkhorn(mu, nu, cost, huge, huge, opt);
    double dev = 0.0;
    for (int i = 0; i < 2; ++i) {
      dev = std::max(dev, std::fabs(plan.row_marginals[static_cast<size_t>(i)] - 0.5));
      dev = std::max(dev, std::fabs(plan.col_marginals[static_cast<size_t>(i)] - 0.5));
    }
    const bool pass = dev < 1e-3;
    all_pass = all_pass && pass;
    csv << strf("zero_cost,2,2,%.3e,%.6f,%.6f,%s\n", dev, dev, dev, pass ? "pass" : "FAIL");
    std::printf("oracle zero-cost huge-scale: marginal dev %.3e %s\n", dev, pass ? "pass" : "FAIL");
  }
  csv.close();
  write_manifest(dir.string(), config.experiment, "oracle-check", fnv1a64_str(dump_resolved_config(config)),
                 config.master_seed, {"oracle_results.csv"});
  std::printf("oracle-check: %s\n", all_pass ? "ALL PASS" : "FAILURES");
  return all_pass ? 0 : 1;
}

int cmd_sweep(const RunConfig& config, const std::string& dotted_path, const std::vector<double>& values) {
  config.validate();
  if (values.empty()) throw ConfigError("cmd_sweep: empty value list");
  PretrainArtifacts pretrain = load_pretrain_artifacts(config);

  const fs::path sweep_dir = fs::path(config.output_dir) / config.experiment / "sweep" / dotted_path;
  fs::create_directories(sweep_dir);

  // shared preparation: sweep points differ only in the swept parameter
  DataSource source(config.data);
  PreparedUnlearn prepared = prepare_unlearn_inputs(config, pretrain.generator, source);
  const double base_margin_unscaled = prepared.margin / config.margin_scale;

  std::ofstream summary((sweep_dir / "sweep_summary.csv").string(), std::ios::trunc);
  summary << "value,pul,frechet_retain,oos_mass\n";

  const std::string base_dump = dump_resolved_config(config);
  std::string pointer_path = "/" + dotted_path;
  for (char& c : pointer_path)
    if (c == '.') c = '/';
  const json::json_pointer swept_key(pointer_path);

  for (double value : values) {
    RunConfig derived = apply_override(config, dotted_path, value);
    // isolation: resetting the swept key must recover the base config
    json base_json = json::parse(base_dump);
    json derived_json = json::parse(dump_resolved_config(derived));
    derived_json[swept_key] = base_json[swept_key];
    if (base_json != derived_json) {
      throw Error(strf("cmd_sweep: derived config for %g differs beyond '%s'", value, dotted_path.c_str()));
    }

    UnlearnConfig trainer_cfg = derived.unlearn;
    trainer_cfg.cost.margin =
        (derived.margin_auto ? base_margin_unscaled : derived.unlearn.cost.margin) * derived.margin_scale;

    const fs::path run_dir = sweep_dir / strf("%g", value);
    fs::create_directories(run_dir);
    UnlearnRunResult result = run_unlearn(pretrain.generator, prepared.extractor, prepared.anchor, trainer_cfg,
                                          derived.data, derived.forget_mode, derived.eval, run_dir.string());
    write_text((run_dir / "resolved_config.json").string(), dump_resolved_config(derived));
    summary << strf("%.10g,%.10g,%.10g,%.10g\n", value, result.final_report.pul_percent,
                    result.final_report.frechet_retain, result.final_report.oos_mass);
    std::printf("sweep %s=%g: pul %.2f%% frechet_retain %.4f oos %.4f\n", dotted_path.c_str(), value,
                result.final_report.pul_percent, result.final_report.frechet_retain,
                result.final_report.oos_mass);
  }
  summary.close();
  write_manifest(sweep_dir.string(), config.experiment, strf("sweep-%s", dotted_path.c_str()),
                 fnv1a64_str(base_dump), config.master_seed, {"sweep_summary.csv"});
  return 0;
}

int cmd_plot(const RunConfig& config, const std::string& checkpoint_path, const std::string& out_path,
             int n_samples) {
  config.validate();
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  OneStepGenerator gen{ckpt.spec, ckpt.params, std::nullopt, ckpt.spec.input_width()};
  DenseMatrix samples = generate(gen, n_samples, derive_seed(config.master_seed, "plot"));
  emit_scatter_plot(samples, config.data, config.forget_mode, out_path, config.eval.k_sigma);
  std::printf("plot: wrote %s (%d samples)\n", out_path.c_str(), n_samples);
  return 0;
}

}  // namespace uotlab
