// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_support.hpp"
#include "uotlab/features.hpp"
#include "uotlab/rng.hpp"

using namespace uotlab;

namespace {

FeatureExtractor raw2() { return FeatureExtractor::raw_identity(2); }

CostConfig cosine_cfg(double lambda, double tau, double margin) {
  CostConfig cfg;
  cfg.lambda = lambda;
  cfg.tau = tau;
  cfg.margin = margin;
  cfg.distance = DistanceKind::Cosine;
  return cfg;
}

}  // namespace

TEST_CASE("cosine distance: stated values and zero-norm guard") {
  std::vector<double> a = {1.0, 0.0}, b = {0.0, 1.0}, c = {-1.0, 0.0}, z = {0.0, 0.0};
  CHECK(cosine_distance(a, a) == doctest::Approx(0.0));
  CHECK(cosine_distance(a, b) == doctest::Approx(1.0));
  CHECK(cosine_distance(a, c) == doctest::Approx(2.0));
  CHECK_THROWS_AS(cosine_distance(a, z), Error);
  CHECK_THROWS_AS(cosine_distance(z, a), Error);
}

TEST_CASE("cosine distance is invariant to positive scaling") {
  Rng rng(41);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> a = {rng.normal(), rng.normal(), rng.normal()};
    std::vector<double> b = {rng.normal(), rng.normal(), rng.normal()};
    const double scale = 0.01 + 10.0 * rng.uniform();
    std::vector<double> sa = a;
    for (double& v : sa) v *= scale;
    CHECK(cosine_distance(a, b) == doctest::Approx(cosine_distance(sa, b)).epsilon(1e-9));
  }
}

TEST_CASE("compute_anchor: single sample, midpoint, empty error") {
  FeatureExtractor fe = raw2();
  DenseMatrix one = DenseMatrix::from(1, 2, {0.3, -0.7});
  ForgetAnchor a1 = compute_anchor(fe, one);
  CHECK(a1.mu_f[0] == doctest::Approx(0.3));
  CHECK(a1.mu_f[1] == doctest::Approx(-0.7));
  CHECK(a1.source_sample_count == 1);

  DenseMatrix two = DenseMatrix::from(2, 2, {1.0, 0.0, 0.0, 1.0});
  ForgetAnchor a2 = compute_anchor(fe, two);
  CHECK(a2.mu_f[0] == doctest::Approx(0.5));
  CHECK(a2.mu_f[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(compute_anchor(fe, DenseMatrix(0, 2)), ConfigError);
}

TEST_CASE("compute_anchor: 512 draws land within the CLT bound of the center") {
  FeatureExtractor fe = raw2();
  DataSource source(GmmSpec::default_three_modes());
  DenseMatrix draws = source.sample_mode(0, 512, 99);
  ForgetAnchor anchor = compute_anchor(fe, draws);
  const double bound = 3.0 * 0.1 / std::sqrt(512.0);
  CHECK(std::fabs(anchor.mu_f[0] - 0.0) < bound);
  CHECK(std::fabs(anchor.mu_f[1] - 1.0) < bound);
}

TEST_CASE("in_forget_region: anchor hit, orthogonal miss, strict boundary") {
  FeatureExtractor fe = raw2();
  ForgetAnchor anchor{{0.0, 1.0}, 8};

  CostConfig cfg = cosine_cfg(1.0, 1.0, 0.34);
  std::vector<double> at_anchor = {0.0, 2.0};  // same direction as mu_f
  CHECK(in_forget_region(at_anchor, fe, anchor, cfg));

  std::vector<double> orthogonal = {1.0, 0.0};
  CHECK_FALSE(in_forget_region(orthogonal, fe, anchor, cfg));  // distance 1 >= 0.34

  // boundary: point at exactly distance m is outside (strict inequality)
  std::vector<double> diagonal = {1.0, 1.0};
  const double d = cosine_distance(diagonal, anchor.mu_f);
  CostConfig boundary = cosine_cfg(1.0, 1.0, d);
  CHECK_FALSE(in_forget_region(diagonal, fe, anchor, boundary));
  boundary.margin = d + 1e-12;
  CHECK(in_forget_region(diagonal, fe, anchor, boundary));
}

TEST_CASE("region membership is scale-invariant under the cosine metric") {
  FeatureExtractor fe = raw2();
  ForgetAnchor anchor{{0.5, 0.5}, 4};
  CostConfig cfg = cosine_cfg(1.0, 1.0, 0.2);
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> x = {rng.normal(), rng.normal()};
    if (std::hypot(x[0], x[1]) < 1e-6) continue;
    const double scale = 0.01 + 5.0 * rng.uniform();
    std::vector<double> sx = {scale * x[0], scale * x[1]};
    CHECK(in_forget_region(x, fe, anchor, cfg) == in_forget_region(sx, fe, anchor, cfg));
  }
}

TEST_CASE("unlearn_cost: stated cases") {
  FeatureExtractor fe = raw2();
  ForgetAnchor anchor{{0.0, 1.0}, 8};
  CostConfig cfg = cosine_cfg(1.0, 1.0, 0.34);

  // outside the region with x_cur == x_pre: zero transport cost
  std::vector<double> outside = {1.0, 0.0};
  CostResult r1 = unlearn_cost(outside, outside, fe, anchor, cfg);
  CHECK_FALSE(r1.in_region);
  CHECK(r1.cost == doctest::Approx(0.0));

  // feature at the anchor: hinge at full margin
  std::vector<double> pre = {0.4, 0.2};
  std::vector<double> at_anchor = {0.0, 1.0};
  CostResult r2 = unlearn_cost(pre, at_anchor, fe, anchor, cfg);
  CHECK(r2.in_region);
  CHECK(r2.cost == doctest::Approx(0.34));

  // outside with |x_pre - x_cur| = 2
  std::vector<double> cur = {3.0, 0.0};
  CostResult r3 = unlearn_cost(outside, cur, fe, anchor, cfg);
  CHECK_FALSE(r3.in_region);
  CHECK(r3.cost == doctest::Approx(4.0));
}

TEST_CASE("unlearn_cost: non-negative, forget branch bounded by lambda * margin") {
  FeatureExtractor fe = raw2();
  ForgetAnchor anchor{{0.3, 0.8}, 4};
  CostConfig cfg = cosine_cfg(1.7, 0.6, 0.4);
  Rng rng(17);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> pre = {rng.normal(), rng.normal()};
    std::vector<double> cur = {rng.normal(), rng.normal()};
    if (std::hypot(cur[0], cur[1]) < 1e-9) continue;
    CostResult r = unlearn_cost(pre, cur, fe, anchor, cfg);
    CHECK(r.cost >= 0.0);
    if (r.in_region) CHECK(r.cost <= cfg.lambda * cfg.margin + 1e-12);
  }
}

TEST_CASE("anchor distance gradients match central differences") {
  Rng rng(19);
  for (DistanceKind kind : {DistanceKind::Cosine, DistanceKind::Euclidean}) {
    for (int t = 0; t < 50; ++t) {
      std::vector<double> f = {rng.normal() + 2.0, rng.normal(), rng.normal()};
      std::vector<double> mu = {rng.normal(), rng.normal() + 1.5, rng.normal()};
      auto grad = anchor_distance_feature_grad(kind, f, mu);
      for (size_t i = 0; i < f.size(); ++i) {
        const double h = 1e-6;
        std::vector<double> up = f, down = f;
        up[i] += h;
        down[i] -= h;
        const double numeric = (feature_distance(kind, up, mu) - feature_distance(kind, down, mu)) / (2 * h);
        CHECK(grad[i] == doctest::Approx(numeric).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("cost config validation") {
  CHECK_THROWS_AS(cosine_cfg(0.0, 1.0, 0.3).validate(), ConfigError);
  CHECK_THROWS_AS(cosine_cfg(1.0, -1.0, 0.3).validate(), ConfigError);
  CHECK_THROWS_AS(cosine_cfg(1.0, 1.0, 2.5).validate(), ConfigError);
  CostConfig euclid;
  euclid.distance = DistanceKind::Euclidean;
  euclid.margin = 2.5;  // no cosine cap
  CHECK_NOTHROW(euclid.validate());
}

TEST_CASE("raw identity extractor requires no training") {
  FeatureExtractor fe = FeatureExtractor::raw_identity(3);
  CHECK(fe.feature_dim == 3);
  CHECK(fe.kind == FeatureKind::RawIdentity);
  DenseMatrix x = DenseMatrix::from(2, 3, {1, 2, 3, 4, 5, 6});
  DenseMatrix f = fe.features(x);
  CHECK(f.data == x.data);
}

TEST_CASE("classifier extractor: accuracy floor, determinism, gradients") {
  const auto& fixture = testing::shared_pretrain();
  ClassifierTrainConfig cfg;
  cfg.train_samples = 6000;
  cfg.holdout_samples = 1500;
  cfg.iterations = 1500;
  cfg.seed = 404;
  FeatureExtractor fe = train_feature_classifier(fixture.generator, fixture.spec, cfg);
  CHECK(fe.holdout_accuracy >= cfg.accuracy_floor);
  CHECK(fe.feature_dim == cfg.hidden_width);

  // determinism
  FeatureExtractor fe2 = train_feature_classifier(fixture.generator, fixture.spec, cfg);
  CHECK(fe.classifier_params.content_hash() == fe2.classifier_params.content_hash());

  // unreachable accuracy floor carries the final accuracy in the error
  ClassifierTrainConfig hopeless = cfg;
  hopeless.iterations = 0;
  hopeless.accuracy_floor = 0.999;
  CHECK_THROWS_WITH_AS(train_feature_classifier(fixture.generator, fixture.spec, hopeless),
                       doctest::Contains("below floor"), Error);

  // feature input gradients agree with central differences
  DenseMatrix x = DenseMatrix::from(1, 2, {0.1, 0.8});
  DenseMatrix upstream(1, fe.feature_dim);
  Rng rng(5);
  for (double& v : upstream.data) v = rng.normal();
  DenseMatrix grad = fe.features_input_grad(x, upstream);
  for (int c = 0; c < 2; ++c) {
    const double h = 1e-6;
    DenseMatrix up = x, down = x;
    up.at(0, c) += h;
    down.at(0, c) -= h;
    double dot_up = 0.0, dot_down = 0.0;
    DenseMatrix fu = fe.features(up), fd = fe.features(down);
    for (int k = 0; k < fe.feature_dim; ++k) {
      dot_up += fu.at(0, k) * upstream.at(0, k);
      dot_down += fd.at(0, k) * upstream.at(0, k);
    }
    CHECK(grad.at(0, c) == doctest::Approx((dot_up - dot_down) / (2 * h)).epsilon(1e-4));
  }
}

TEST_CASE("margin calibration: percentile, clamp floor, determinism") {
  FeatureExtractor fe = raw2();
  DataSource source(GmmSpec::default_three_modes());
  DenseMatrix anchor_draws = source.sample_mode(0, 512, 1);
  ForgetAnchor anchor = compute_anchor(fe, anchor_draws);
  DenseMatrix holdout = source.sample_mode(0, 512, 2);

  // euclidean distances of a sigma=0.1 Gaussian: 95th percentile ~ 0.245
  const double m = calibrate_margin(fe, anchor, holdout, DistanceKind::Euclidean);
  CHECK(m > 0.2);
  CHECK(m < 0.3);
  CHECK(m == calibrate_margin(fe, anchor, holdout, DistanceKind::Euclidean));

  // tight cluster clamps to the floor
  GmmSpec tight = GmmSpec::default_three_modes();
  for (auto& mode : tight.modes) mode.sigma = 1e-6;
  DataSource tight_source(tight);
  DenseMatrix tight_holdout = tight_source.sample_mode(0, 256, 3);
  ForgetAnchor tight_anchor = compute_anchor(fe, tight_source.sample_mode(0, 256, 4));
  CHECK(calibrate_margin(fe, tight_anchor, tight_holdout, DistanceKind::Euclidean) == doctest::Approx(0.05));
}
