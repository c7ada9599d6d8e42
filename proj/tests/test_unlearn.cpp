// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "test_support.hpp"
#include "uotlab/checkpoint.hpp"
#include "uotlab/unlearn.hpp"

using namespace uotlab;

namespace {

OneStepGenerator constant_generator(double x, double y) {
  OneStepGenerator gen;
  gen.data_dim = 2;
  gen.spec = MlpSpec::make({2, 2}, Activation::Identity);
  gen.params = ParamStore::zeros(gen.spec);
  gen.params.biases[0].at(0, 0) = x;
  gen.params.biases[0].at(0, 1) = y;
  return gen;
}

// anchor far from everything the generators produce: the region never fires
ForgetAnchor far_anchor() { return ForgetAnchor{{50.0, 50.0}, 8}; }

UnlearnConfig small_config() {
  UnlearnConfig cfg;
  cfg.batch_b1 = cfg.batch_b2 = cfg.batch_b3 = 32;
  cfg.cost.distance = DistanceKind::Euclidean;
  cfg.cost.margin = 0.3;
  cfg.potential_hidden = {32, 32};
  cfg.iterations = 10;
  cfg.eval_every = 5;
  cfg.seed = 91;
  return cfg;
}

void set_constant_potential(UnlearnState& state, double value) {
  state.potential_params.fill(0.0);
  state.potential_params.biases.back().at(0, 0) = value;
}

}  // namespace

TEST_CASE("dual_loss: zero potential and zero costs give exactly zero") {
  OneStepGenerator gen = constant_generator(0.5, -0.5);
  UnlearnState state = UnlearnState::create(gen, FeatureExtractor::raw_identity(2), far_anchor(), small_config());
  set_constant_potential(state, 0.0);
  DenseMatrix b1 = sample_prior(2, 16, 1), b2 = sample_prior(2, 16, 2);
  CHECK(dual_loss(state, b1, b2) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("dual_loss: constant potential c gives exp(c) + exp(-c) - 2") {
  OneStepGenerator gen = constant_generator(0.5, -0.5);
  UnlearnState state = UnlearnState::create(gen, FeatureExtractor::raw_identity(2), far_anchor(), small_config());
  for (double c : {0.0, 0.3, 0.7, -0.4}) {
    set_constant_potential(state, c);
    DenseMatrix b1 = sample_prior(2, 16, 3), b2 = sample_prior(2, 16, 4);
    const double value = dual_loss(state, b1, b2);
    const double expected = (std::exp(c) - 1.0) + (std::exp(-c) - 1.0);
    CHECK(value == doctest::Approx(expected).epsilon(1e-12));
    CHECK(value >= -1e-12);  // convexity minimum at c = 0
  }
}

TEST_CASE("dual_loss: straight-line recomputation from per-sample logs") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnConfig cfg = small_config();
  cfg.batch_b1 = cfg.batch_b2 = cfg.batch_b3 = 4;
  UnlearnState state = UnlearnState::create(fixture.generator, FeatureExtractor::raw_identity(2),
                                            ForgetAnchor{{0.0, 1.0}, 8}, cfg);
  DenseMatrix b1 = sample_prior(2, 4, 5), b2 = sample_prior(2, 4, 6);
  PerSampleDualLog log;
  const double value = dual_loss(state, b1, b2, &log);

  double term1 = 0.0, term2 = 0.0;
  for (int r = 0; r < 4; ++r) {
    term1 += std::expm1(log.v_on_gtheta[static_cast<size_t>(r)] - log.cost_b1[static_cast<size_t>(r)]);
    term2 += std::expm1(-log.v_on_gpre[static_cast<size_t>(r)]);
  }
  CHECK(value == doctest::Approx(term1 / 4 + term2 / 4).epsilon(1e-9));
}

TEST_CASE("generator_loss: at the pretrained point with no region hits") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnState state =
      UnlearnState::create(fixture.generator, FeatureExtractor::raw_identity(2), far_anchor(), small_config());
  DenseMatrix b3 = sample_prior(2, 8, 7);
  PerSampleGenLog log;
  const double value = generator_loss(state, b3, &log);
  // retain cost vanishes at G_theta = G_pre, so the loss is -mean v
  double mean_v = 0.0;
  for (double v : log.v_on_gtheta) mean_v += v / 8.0;
  for (double c : log.cost_b3) CHECK(c == 0.0);
  CHECK(value == doctest::Approx(-mean_v).epsilon(1e-12));
}

TEST_CASE("generator_loss: zero potential, all samples at the anchor") {
  UnlearnConfig cfg = small_config();
  cfg.cost.distance = DistanceKind::Cosine;
  cfg.cost.lambda = 1.0;
  cfg.cost.margin = 0.34;
  OneStepGenerator gen = constant_generator(0.0, 1.0);  // outputs exactly the anchor point
  UnlearnState state =
      UnlearnState::create(gen, FeatureExtractor::raw_identity(2), ForgetAnchor{{0.0, 1.0}, 8}, cfg);
  set_constant_potential(state, 0.0);
  DenseMatrix b3 = sample_prior(2, 16, 8);
  CHECK(generator_loss(state, b3) == doctest::Approx(0.34).epsilon(1e-12));
}

TEST_CASE("generator_loss: straight-line recomputation on a random state") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnConfig cfg = small_config();
  cfg.batch_b3 = 4;
  UnlearnState state = UnlearnState::create(fixture.generator, FeatureExtractor::raw_identity(2),
                                            ForgetAnchor{{0.0, 1.0}, 8}, cfg);
  DenseMatrix b3 = sample_prior(2, 4, 9);
  PerSampleGenLog log;
  const double value = generator_loss(state, b3, &log);
  double expected = 0.0;
  for (int r = 0; r < 4; ++r) {
    expected += (log.cost_b3[static_cast<size_t>(r)] - log.v_on_gtheta[static_cast<size_t>(r)]) / 4.0;
  }
  CHECK(value == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("unlearn_step: zero learning rates change nothing but the counter") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnConfig cfg = small_config();
  cfg.generator_lr = 0.0;
  cfg.potential_lr = 0.0;
  UnlearnState state = UnlearnState::create(fixture.generator, FeatureExtractor::raw_identity(2),
                                            ForgetAnchor{{0.0, 1.0}, 8}, cfg);
  const uint64_t gen_hash = state.g_theta.params.content_hash();
  const uint64_t pot_hash = state.potential_params.content_hash();
  unlearn_step(state);
  CHECK(state.iteration == 1);
  CHECK(state.g_theta.params.content_hash() == gen_hash);
  CHECK(state.potential_params.content_hash() == pot_hash);
}

TEST_CASE("unlearn_step: reproducible from identical state and seed") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnConfig cfg = small_config();
  auto run_once = [&] {
    UnlearnState state = UnlearnState::create(fixture.generator, FeatureExtractor::raw_identity(2),
                                              ForgetAnchor{{0.0, 1.0}, 8}, cfg);
    for (int i = 0; i < 3; ++i) unlearn_step(state);
    return std::pair{state.g_theta.params.content_hash(), state.potential_params.content_hash()};
  };
  CHECK(run_once() == run_once());
}

TEST_CASE("unlearn_step: g_pre stays frozen and g_theta starts byte-identical") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnState state = UnlearnState::create(fixture.generator, FeatureExtractor::raw_identity(2),
                                            ForgetAnchor{{0.0, 1.0}, 8}, small_config());
  CHECK(state.g_theta.params.content_hash() == state.g_pre.params.content_hash());
  const uint64_t pre_hash = state.g_pre.params.content_hash();
  for (int i = 0; i < 5; ++i) unlearn_step(state);
  CHECK(state.g_pre.params.content_hash() == pre_hash);
  CHECK(state.g_theta.params.content_hash() != pre_hash);  // training moved theta
}

TEST_CASE("unlearn_step: EMA tracks the live parameters when enabled") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnConfig cfg = small_config();
  cfg.ema_decay = 0.5;
  UnlearnState state = UnlearnState::create(fixture.generator, FeatureExtractor::raw_identity(2),
                                            ForgetAnchor{{0.0, 1.0}, 8}, cfg);
  REQUIRE(state.g_theta.ema_params.has_value());
  for (int i = 0; i < 3; ++i) unlearn_step(state);
  // ema lies strictly between the pretrained weights and the live weights
  const double live = state.g_theta.params.weights[0].at(0, 0);
  const double pre = state.g_pre.params.weights[0].at(0, 0);
  const double ema = state.g_theta.ema_params->weights[0].at(0, 0);
  if (live != pre) {
    CHECK(ema >= std::min(live, pre) - 1e-12);
    CHECK(ema <= std::max(live, pre) + 1e-12);
  }
}

TEST_CASE("loss algebra holds after real training steps") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnConfig cfg = small_config();
  cfg.cost.distance = DistanceKind::Euclidean;
  UnlearnState state = UnlearnState::create(fixture.generator, FeatureExtractor::raw_identity(2),
                                            ForgetAnchor{{0.0, 1.0}, 8}, cfg);
  for (int i = 0; i < 50; ++i) unlearn_step(state);

  DenseMatrix b1 = sample_prior(2, 32, 11), b2 = sample_prior(2, 32, 12), b3 = sample_prior(2, 32, 13);
  PerSampleDualLog dlog;
  PerSampleGenLog glog;
  const double dual = dual_loss(state, b1, b2, &dlog);
  const double gen = generator_loss(state, b3, &glog);
  double t1 = 0.0, t2 = 0.0, g = 0.0;
  for (int r = 0; r < 32; ++r) {
    t1 += std::expm1(dlog.v_on_gtheta[static_cast<size_t>(r)] - dlog.cost_b1[static_cast<size_t>(r)]) / 32.0;
    t2 += std::expm1(-dlog.v_on_gpre[static_cast<size_t>(r)]) / 32.0;
    g += (glog.cost_b3[static_cast<size_t>(r)] - glog.v_on_gtheta[static_cast<size_t>(r)]) / 32.0;
  }
  CHECK(dual == doctest::Approx(t1 + t2).epsilon(1e-9));
  CHECK(gen == doctest::Approx(g).epsilon(1e-9));
}

TEST_CASE("run_unlearn: zero iterations emit a byte-identical checkpoint") {
  const auto& fixture = testing::shared_pretrain();
  UnlearnConfig cfg = small_config();
  cfg.iterations = 0;
  const std::string dir = (std::filesystem::temp_directory_path() / "uotlab_run0").string();
  std::filesystem::remove_all(dir);
  EvalConfig eval_cfg;
  eval_cfg.n_samples = 2000;
  UnlearnRunResult result = run_unlearn(fixture.generator, FeatureExtractor::raw_identity(2),
                                        ForgetAnchor{{0.0, 1.0}, 8}, cfg, fixture.spec, 0, eval_cfg, dir);
  Checkpoint back = load_checkpoint(dir + "/gtheta_final.ckpt");
  CHECK(back.params.content_hash() == fixture.generator.params.content_hash());
  CHECK(result.final_report.pul_percent == doctest::Approx(0.0));
  CHECK(result.rows.size() == 1);
  std::filesystem::remove_all(dir);
}

TEST_CASE("run_unlearn: the optimization path never touches the data source") {
  const auto& fixture = testing::shared_pretrain();
  DataSource source(fixture.spec);
  DenseMatrix anchor_draws = source.sample_mode(0, 64, 21);  // one-time anchor computation
  FeatureExtractor extractor = FeatureExtractor::raw_identity(2);
  ForgetAnchor anchor = compute_anchor(extractor, anchor_draws);
  const long accesses_after_anchor = source.access_count();

  UnlearnConfig cfg = small_config();
  cfg.iterations = 30;
  EvalConfig eval_cfg;
  eval_cfg.n_samples = 2000;
  run_unlearn(fixture.generator, extractor, anchor, cfg, fixture.spec, 0, eval_cfg);
  CHECK(source.access_count() == accesses_after_anchor);
}

TEST_CASE("uotm_pretrain: zero iterations return the initialized map") {
  UotmConfig cfg;
  cfg.iterations = 0;
  cfg.seed = 55;
  cfg.generator_hidden = {16};
  UotmResult result = uotm_pretrain(normal_prior_sampler(2), 2, cfg);
  ParamStore expected = ParamStore::kaiming_uniform(result.generator.spec, derive_seed(55, "uotm.generator"));
  CHECK(result.generator.params.content_hash() == expected.content_hash());
}

TEST_CASE("uotm_pretrain: point-mass target is reached within 0.1 mean distance") {
  const std::vector<double> target = {0.4, -0.3};
  BatchSampler data = [&target](int n, Rng&) {
    DenseMatrix out(n, 2);
    for (int r = 0; r < n; ++r) {
      out.at(r, 0) = target[0];
      out.at(r, 1) = target[1];
    }
    return out;
  };
  UotmConfig cfg;
  cfg.iterations = 3000;
  cfg.batch = 128;
  cfg.generator_lr = 1e-3;
  cfg.potential_lr = 1e-3;
  cfg.generator_hidden = {48, 48};
  cfg.potential_hidden = {48};
  cfg.seed = 56;
  UotmResult result = uotm_pretrain(data, 2, cfg);

  DenseMatrix samples = generate(result.generator, 1024, 77);
  double mean_dist = 0.0;
  for (int r = 0; r < samples.rows; ++r) {
    mean_dist += std::hypot(samples.at(r, 0) - target[0], samples.at(r, 1) - target[1]);
  }
  mean_dist /= samples.rows;
  CHECK(mean_dist < 0.1);
}

TEST_CASE("uotm_pretrain: three-mode data stays on support") {
  DataSource source(GmmSpec::default_three_modes());
  BatchSampler data = [&source](int n, Rng& rng) { return source.sample(n, rng.next_u64()); };
  UotmConfig cfg;
  cfg.iterations = 4000;
  cfg.batch = 128;
  cfg.generator_lr = 1e-3;
  cfg.potential_lr = 1e-3;
  cfg.generator_hidden = {64, 64};
  cfg.potential_hidden = {64, 64};
  cfg.seed = 57;
  UotmResult result = uotm_pretrain(data, 2, cfg);
  EvalConfig eval_cfg;
  eval_cfg.n_samples = 20000;
  EvalReport report = evaluate(result.generator, std::nullopt, GmmSpec::default_three_modes(), 0, eval_cfg);
  CHECK(report.oos_mass <= 0.05);
}

TEST_CASE("config validation rejects bad unlearn settings") {
  UnlearnConfig cfg = small_config();
  cfg.batch_b2 = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.ema_decay = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.cost.lambda = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
