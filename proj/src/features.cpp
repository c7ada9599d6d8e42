// SPDX-License-Identifier: Apache-2.0
#include "uotlab/features.hpp"

#include <algorithm>
#include <cmath>

#include "uotlab/adam.hpp"
#include "uotlab/rng.hpp"

namespace uotlab {

const char* feature_kind_name(FeatureKind k) {
  return k == FeatureKind::RawIdentity ? "raw_identity" : "classifier_penultimate";
}

FeatureKind feature_kind_from_name(const std::string& name) {
  if (name == "raw_identity") return FeatureKind::RawIdentity;
  if (name == "classifier_penultimate") return FeatureKind::ClassifierPenultimate;
  throw ConfigError(strf("unknown feature kind '%s'", name.c_str()));
}

const char* distance_kind_name(DistanceKind k) {
  return k == DistanceKind::Cosine ? "cosine" : "euclidean";
}

DistanceKind distance_kind_from_name(const std::string& name) {
  if (name == "cosine") return DistanceKind::Cosine;
  if (name == "euclidean") return DistanceKind::Euclidean;
  throw ConfigError(strf("unknown distance kind '%s'", name.c_str()));
}

DenseMatrix FeatureExtractor::features(const DenseMatrix& x) const {
  if (x.cols != input_dim) {
    throw ShapeError(strf("FeatureExtractor: input has %d cols, expected %d", x.cols, input_dim));
  }
  if (kind == FeatureKind::RawIdentity) return x;
  return mlp_forward(trunk_spec, trunk_params, x);
}

DenseMatrix FeatureExtractor::features_input_grad(const DenseMatrix& x, const DenseMatrix& upstream) const {
  if (kind == FeatureKind::RawIdentity) return upstream;
  return mlp_backward(trunk_spec, trunk_params, x, upstream).input;
}

uint64_t FeatureExtractor::content_hash() const {
  uint64_t h = fnv1a64_str(feature_kind_name(kind));
  if (kind == FeatureKind::ClassifierPenultimate) h ^= classifier_params.content_hash();
  return h;
}

FeatureExtractor FeatureExtractor::raw_identity(int dim) {
  FeatureExtractor fe;
  fe.kind = FeatureKind::RawIdentity;
  fe.input_dim = dim;
  fe.feature_dim = dim;
  return fe;
}

FeatureExtractor FeatureExtractor::from_classifier(MlpSpec spec, ParamStore params,
                                                   double holdout_accuracy) {
  spec.validate();
  if (spec.layer_count() < 2) throw ConfigError("FeatureExtractor: classifier needs a hidden layer");
  FeatureExtractor fe;
  fe.kind = FeatureKind::ClassifierPenultimate;
  fe.input_dim = spec.input_width();
  fe.feature_dim = spec.layer_widths[spec.layer_widths.size() - 2];
  fe.holdout_accuracy = holdout_accuracy;

  // trunk = classifier minus the final linear layer; the last trunk layer
  // keeps the hidden activation
  fe.trunk_spec.layer_widths.assign(spec.layer_widths.begin(), spec.layer_widths.end() - 1);
  fe.trunk_spec.hidden_activation = spec.hidden_activation;
  fe.trunk_spec.output_activation = spec.hidden_activation;
  fe.trunk_spec.leaky_slope = spec.leaky_slope;
  fe.trunk_params.weights.assign(params.weights.begin(), params.weights.end() - 1);
  fe.trunk_params.biases.assign(params.biases.begin(), params.biases.end() - 1);

  fe.classifier_spec = std::move(spec);
  fe.classifier_params = std::move(params);
  return fe;
}

namespace {

struct LabeledSet {
  DenseMatrix points;
  std::vector<int> labels;
};

LabeledSet label_generated(const DenseMatrix& samples, const GmmSpec& spec, double k_sigma) {
  LabeledSet set;
  std::vector<int> keep;
  std::vector<int> labels;
  for (int r = 0; r < samples.rows; ++r) {
    auto mode = nearest_mode(samples.row(r), spec, k_sigma);
    if (!mode.has_value()) continue;
    keep.push_back(r);
    labels.push_back(*mode);
  }
  set.points = DenseMatrix(static_cast<int>(keep.size()), samples.cols);
  for (size_t i = 0; i < keep.size(); ++i) {
    const auto src = samples.row(keep[i]);
    std::copy(src.begin(), src.end(), set.points.row(static_cast<int>(i)).begin());
  }
  set.labels = std::move(labels);
  return set;
}

double holdout_accuracy_of(const MlpSpec& spec, const ParamStore& params, const LabeledSet& set) {
  if (set.labels.empty()) return 0.0;
  DenseMatrix logits = mlp_forward(spec, params, set.points);
  int correct = 0;
  for (int r = 0; r < logits.rows; ++r) {
    int arg = 0;
    for (int c = 1; c < logits.cols; ++c) {
      if (logits.at(r, c) > logits.at(r, arg)) arg = c;
    }
    if (arg == set.labels[static_cast<size_t>(r)]) correct++;
  }
  return static_cast<double>(correct) / logits.rows;
}

}  // namespace

FeatureExtractor train_feature_classifier(const OneStepGenerator& gen, const GmmSpec& spec,
                                          const ClassifierTrainConfig& config) {
  spec.validate();
  const int classes = spec.mode_count();
  const int d = gen.data_dim;

  DenseMatrix pool =
      generate(gen, config.train_samples + config.holdout_samples, derive_seed(config.seed, "classifier.samples"));
  DenseMatrix train_part(config.train_samples, d);
  DenseMatrix holdout_part(config.holdout_samples, d);
  for (int r = 0; r < config.train_samples; ++r) {
    std::copy(pool.row(r).begin(), pool.row(r).end(), train_part.row(r).begin());
  }
  for (int r = 0; r < config.holdout_samples; ++r) {
    std::copy(pool.row(config.train_samples + r).begin(), pool.row(config.train_samples + r).end(),
              holdout_part.row(r).begin());
  }
  LabeledSet train = label_generated(train_part, spec, config.k_sigma);
  LabeledSet holdout = label_generated(holdout_part, spec, config.k_sigma);
  if (train.labels.size() < static_cast<size_t>(config.batch)) {
    throw Error("train_feature_classifier: too few labeled generated samples");
  }

  std::vector<int> widths;
  widths.push_back(d);
  for (int l = 0; l < config.hidden_layers; ++l) widths.push_back(config.hidden_width);
  widths.push_back(classes);
  MlpSpec cls_spec = MlpSpec::make(widths, Activation::LeakyReLU);
  ParamStore params = ParamStore::kaiming_uniform(cls_spec, derive_seed(config.seed, "classifier.init"));

  Rng rng(derive_seed(config.seed, "classifier.loop"));
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  AdamState adam = AdamState::create(cls_spec, adam_cfg);

  const int n_train = static_cast<int>(train.labels.size());
  std::vector<int> batch_rows(static_cast<size_t>(config.batch));
  DenseMatrix batch(config.batch, d);
  for (int iter = 0; iter < config.iterations; ++iter) {
    for (int& r : batch_rows) r = rng.index(n_train);
    for (int r = 0; r < config.batch; ++r) {
      const auto src = train.points.row(batch_rows[static_cast<size_t>(r)]);
      std::copy(src.begin(), src.end(), batch.row(r).begin());
    }
    ForwardTrace trace = mlp_forward_trace(cls_spec, params, batch);
    DenseMatrix upstream(config.batch, classes);
    for (int r = 0; r < config.batch; ++r) {
      // softmax cross-entropy gradient on the logits
      double mx = trace.output().at(r, 0);
      for (int c = 1; c < classes; ++c) mx = std::max(mx, trace.output().at(r, c));
      double denom = 0.0;
      for (int c = 0; c < classes; ++c) denom += std::exp(trace.output().at(r, c) - mx);
      const int label = train.labels[static_cast<size_t>(batch_rows[static_cast<size_t>(r)])];
      for (int c = 0; c < classes; ++c) {
        const double p = std::exp(trace.output().at(r, c) - mx) / denom;
        upstream.at(r, c) = (p - (c == label ? 1.0 : 0.0)) / config.batch;
      }
    }
    MlpGradients grads = mlp_backward(cls_spec, params, trace, upstream);
    adam_step(params, grads.params, adam);
  }

  const double accuracy = holdout_accuracy_of(cls_spec, params, holdout);
  if (accuracy < config.accuracy_floor) {
    throw Error(strf("train_feature_classifier: held-out accuracy %.4f below floor %.4f", accuracy,
                     config.accuracy_floor));
  }
  return FeatureExtractor::from_classifier(std::move(cls_spec), std::move(params), accuracy);
}

ForgetAnchor compute_anchor(const FeatureExtractor& extractor, const DenseMatrix& forget_samples) {
  if (forget_samples.rows < 1) throw ConfigError("compute_anchor: needs at least one forget sample");
  DenseMatrix feats = extractor.features(forget_samples);
  ForgetAnchor anchor;
  anchor.source_sample_count = feats.rows;
  anchor.mu_f.assign(static_cast<size_t>(feats.cols), 0.0);
  for (int r = 0; r < feats.rows; ++r) {
    for (int c = 0; c < feats.cols; ++c) anchor.mu_f[static_cast<size_t>(c)] += feats.at(r, c);
  }
  for (double& v : anchor.mu_f) {
    v /= feats.rows;
    if (!std::isfinite(v)) throw NonFiniteError("compute_anchor: non-finite anchor entry");
  }
  return anchor;
}

double cosine_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("cosine_distance: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error("cosine_distance: zero-norm input");
  return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
}

double feature_distance(DistanceKind kind, std::span<const double> a, std::span<const double> b) {
  if (kind == DistanceKind::Cosine) return cosine_distance(a, b);
  if (a.size() != b.size()) throw ShapeError("feature_distance: dimension mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return std::sqrt(acc);
}

void CostConfig::validate() const {
  if (lambda <= 0.0) throw ConfigError(strf("CostConfig: lambda %g must be > 0", lambda));
  if (tau <= 0.0) throw ConfigError(strf("CostConfig: tau %g must be > 0", tau));
  if (margin <= 0.0) throw ConfigError(strf("CostConfig: margin %g must be > 0", margin));
  if (distance == DistanceKind::Cosine && margin > 2.0) {
    throw ConfigError(strf("CostConfig: cosine margin %g exceeds 2", margin));
  }
}

bool in_forget_region(std::span<const double> x, const FeatureExtractor& extractor,
                      const ForgetAnchor& anchor, const CostConfig& cfg) {
  cfg.validate();
  DenseMatrix row(1, static_cast<int>(x.size()));
  std::copy(x.begin(), x.end(), row.data.begin());
  DenseMatrix f = extractor.features(row);
  return feature_distance(cfg.distance, f.row(0), anchor.mu_f) < cfg.margin;
}

CostResult unlearn_cost(std::span<const double> x_pre, std::span<const double> x_cur,
                        const FeatureExtractor& extractor, const ForgetAnchor& anchor,
                        const CostConfig& cfg) {
  if (x_pre.size() != x_cur.size()) throw ShapeError("unlearn_cost: point dimension mismatch");
  DenseMatrix pre(1, static_cast<int>(x_pre.size()));
  DenseMatrix cur(1, static_cast<int>(x_cur.size()));
  std::copy(x_pre.begin(), x_pre.end(), pre.data.begin());
  std::copy(x_cur.begin(), x_cur.end(), cur.data.begin());
  CostBatch batch = unlearn_cost_batch(pre, cur, extractor, anchor, cfg);
  return {batch.cost[0], batch.in_region[0] != 0};
}

CostBatch unlearn_cost_batch(const DenseMatrix& x_pre, const DenseMatrix& x_cur,
                             const FeatureExtractor& extractor, const ForgetAnchor& anchor,
                             const CostConfig& cfg) {
  cfg.validate();
  if (!x_pre.same_shape(x_cur)) {
    throw ShapeError(strf("unlearn_cost_batch: x_pre is %d x %d, x_cur is %d x %d", x_pre.rows, x_pre.cols,
                          x_cur.rows, x_cur.cols));
  }
  CostBatch out;
  out.features_cur = extractor.features(x_cur);
  out.cost.resize(static_cast<size_t>(x_cur.rows));
  out.in_region.resize(static_cast<size_t>(x_cur.rows));
  out.anchor_distance.resize(static_cast<size_t>(x_cur.rows));
  for (int r = 0; r < x_cur.rows; ++r) {
    const double dist = feature_distance(cfg.distance, out.features_cur.row(r), anchor.mu_f);
    out.anchor_distance[static_cast<size_t>(r)] = dist;
    const bool inside = dist < cfg.margin;  // strict boundary rule
    out.in_region[static_cast<size_t>(r)] = inside ? 1 : 0;
    if (inside) {
      out.cost[static_cast<size_t>(r)] = cfg.lambda * (cfg.margin - dist);
      out.region_hits += 1;
    } else {
      double sq = 0.0;
      for (int c = 0; c < x_cur.cols; ++c) {
        const double d = x_pre.at(r, c) - x_cur.at(r, c);
        sq += d * d;
      }
      out.cost[static_cast<size_t>(r)] = cfg.tau * sq;
    }
  }
  return out;
}

std::vector<double> anchor_distance_feature_grad(DistanceKind kind, std::span<const double> feature,
                                                 std::span<const double> mu_f) {
  if (feature.size() != mu_f.size()) throw ShapeError("anchor_distance_feature_grad: dimension mismatch");
  std::vector<double> grad(feature.size(), 0.0);
  if (kind == DistanceKind::Euclidean) {
    double norm = 0.0;
    for (size_t i = 0; i < feature.size(); ++i) {
      grad[i] = feature[i] - mu_f[i];
      norm += grad[i] * grad[i];
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) return std::vector<double>(feature.size(), 0.0);
    for (double& g : grad) g /= norm;
    return grad;
  }
  double dot = 0.0, na2 = 0.0, nb2 = 0.0;
  for (size_t i = 0; i < feature.size(); ++i) {
    dot += feature[i] * mu_f[i];
    na2 += feature[i] * feature[i];
    nb2 += mu_f[i] * mu_f[i];
  }
  if (na2 == 0.0 || nb2 == 0.0) throw Error("anchor_distance_feature_grad: zero-norm input");
  const double na = std::sqrt(na2);
  const double nb = std::sqrt(nb2);
  // d/da [1 - a.b / (|a||b|)] = -b/(|a||b|) + (a.b) a / (|a|^3 |b|)
  for (size_t i = 0; i < feature.size(); ++i) {
    grad[i] = -mu_f[i] / (na * nb) + dot * feature[i] / (na2 * na * nb);
  }
  return grad;
}

double calibrate_margin(const FeatureExtractor& extractor, const ForgetAnchor& anchor,
                        const DenseMatrix& holdout_forget_samples, DistanceKind kind, double percentile) {
  if (holdout_forget_samples.rows < 1) throw ConfigError("calibrate_margin: needs holdout samples");
  DenseMatrix feats = extractor.features(holdout_forget_samples);
  std::vector<double> dists(static_cast<size_t>(feats.rows));
  for (int r = 0; r < feats.rows; ++r) dists[static_cast<size_t>(r)] = feature_distance(kind, feats.row(r), anchor.mu_f);
  std::sort(dists.begin(), dists.end());
  const size_t idx = std::min(dists.size() - 1, static_cast<size_t>(std::ceil(percentile * dists.size())) - 1);
  return std::clamp(dists[idx], 0.05, 1.0);
}

}  // namespace uotlab
