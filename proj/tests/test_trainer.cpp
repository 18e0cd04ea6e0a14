#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "refsr/trainer.hpp"
#include "support.hpp"

using namespace refsr;
using namespace testing_support;

namespace {

nn::ParamSet<double> two_tensors(double a, double b) {
  nn::ParamSet<double> ps;
  ps.add("w", {2});
  ps.add("b", {1});
  ps[0].data = {a, -a};
  ps[1].data = {b};
  return ps;
}

/// Textbook bias-corrected Adam on one scalar.
struct ScalarAdam {
  double m = 0, v = 0;
  long long t = 0;
  double step(double p, double g, const TrainConfig& c) {
    ++t;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mhat = m / (1 - std::pow(c.beta1, t)), vhat = v / (1 - std::pow(c.beta2, t));
    return p - c.lr * mhat / (std::sqrt(vhat) + c.eps);
  }
};

}  // namespace

TEST(Adam, MatchesScalarReference) {
  TrainConfig cfg;
  cfg.lr = 1e-3;
  auto params = two_tensors(0.5, -0.25);
  auto state = OptimizerState<double>::for_params(params);
  ScalarAdam ref[3];
  double expect[3] = {0.5, -0.5, -0.25};
  for (int step = 0; step < 50; ++step) {
    auto grads = params.zeros_like();
    const double g[3] = {std::sin(step * 0.3), 0.1 * step - 2.0, std::cos(step * 0.7) * 3.0};
    grads[0].data = {g[0], g[1]};
    grads[1].data = {g[2]};
    adam_step(params, grads, state, cfg);
    for (int i = 0; i < 3; ++i) expect[i] = ref[i].step(expect[i], g[i], cfg);
    EXPECT_NEAR(params[0].data[0], expect[0], 1e-12);
    EXPECT_NEAR(params[0].data[1], expect[1], 1e-12);
    EXPECT_NEAR(params[1].data[0], expect[2], 1e-12);
  }
  EXPECT_EQ(state.step, 50);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  TrainConfig cfg;
  auto params = two_tensors(1.0, 1.0);
  auto grads = params.zeros_like();
  grads[0].data = {4.0, -0.01};
  grads[1].data = {0.0};
  OptimizerState<double> state;
  adam_step(params, grads, state, cfg);
  EXPECT_NEAR(params[0].data[0], 1.0 - 1e-4, 1e-9);
  EXPECT_NEAR(params[0].data[1], -1.0 + 1e-4, 1e-9);
  EXPECT_EQ(params[1].data[0], 1.0);
}

TEST(Adam, NonFiniteGradientNamesParameterAndLeavesStateAlone) {
  TrainConfig cfg;
  auto params = two_tensors(1.0, 2.0);
  const auto before = params;
  auto grads = params.zeros_like();
  grads[1].data = {std::numeric_limits<double>::quiet_NaN()};
  auto state = OptimizerState<double>::for_params(params);
  try {
    adam_step(params, grads, state, cfg);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("'b'"), std::string::npos);
  }
  EXPECT_EQ(params, before);
  EXPECT_EQ(state.step, 0);
}

TEST(TrainConfig, ValidationNamesField) {
  TrainConfig c;
  c.lr = 0;
  try {
    c.validate();
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos);
  }
  c = {};
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ClipGlobalNorm, ScalesToBound) {
  auto g = two_tensors(3.0, 0.0);  // norm sqrt(18)
  clip_global_norm(g, 1.0);
  double sq = 0;
  for (const auto& t : g)
    for (double v : t.data) sq += v * v;
  EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
}

TEST(EpochStream, EveryEpochIsAPermutation) {
  EpochStream s(7, 3);
  for (int epoch = 0; epoch < 4; ++epoch) {
    std::set<std::size_t> seen;
    for (int i = 0; i < 7; ++i) seen.insert(s.next());
    EXPECT_EQ(seen.size(), 7u);
  }
  EpochStream a(10, 1), b(10, 1);
  EXPECT_EQ(a.batch(25), b.batch(25));
}

TEST(LossLog, FormatAndAbsentTerms) {
  const auto dir = temp_dir("losslog");
  write_loss_log({{1, 0.5, std::numeric_limits<double>::quiet_NaN(), 0.5}, {2, 0.25, 1.0, 1.25}}, dir / "l.csv");
  std::ifstream in(dir / "l.csv");
  std::stringstream s;
  s << in.rdbuf();
  EXPECT_EQ(s.str(), "step,L_c,L_b,L_total\n1,0.5,nan,0.5\n2,0.25,1,1.25\n");
}

TEST(Train, DeterministicAndLogsPartition) {
  const auto ds = synth_dataset(4, 3, 32);
  const auto pd = materialize(build_poison_plan(dataset_ids(ds), 0.5, 1, TriggerSpec::make(TriggerKind::filter)), ds,
                              resolve_target("", 32, 32));
  const auto flags = poison_flags(pd.samples, pd.manifest);
  TrainConfig cfg;
  cfg.steps = 3;
  cfg.batch_size = 4;
  cfg.lr = 1e-3;
  const auto phi = FeatureExtractor<float>::make({});
  const auto a = train(pd.samples, flags, tiny_model_config(), cfg, {}, phi);
  const auto b = train(pd.samples, flags, tiny_model_config(), cfg, {}, phi);
  EXPECT_EQ(a.model, b.model);
  ASSERT_EQ(a.log.size(), 3u);
  for (const auto& row : a.log) {
    EXPECT_TRUE(std::isfinite(row.clean));
    EXPECT_TRUE(std::isfinite(row.backdoor));
    EXPECT_DOUBLE_EQ(row.total, row.clean + row.backdoor);
  }
  EXPECT_NE(a.model, init_params<float>(tiny_model_config(), cfg.seed));
}

TEST(Train, CleanOnlyBatchesLogNanBackdoor) {
  const auto ds = synth_dataset(2, 3, 32);
  TrainConfig cfg;
  cfg.steps = 1;
  cfg.batch_size = 2;
  const auto r = train(ds, {false, false}, tiny_model_config(), cfg, {}, FeatureExtractor<float>::make({}));
  EXPECT_TRUE(std::isnan(r.log[0].backdoor));
  EXPECT_EQ(r.log[0].total, r.log[0].clean);
}

TEST(Train, RejectsMissingFlags) {
  const auto ds = synth_dataset(2, 3, 32);
  EXPECT_THROW(train(ds, {false}, tiny_model_config(), TrainConfig{}, {}, FeatureExtractor<float>::make({})),
               DataError);
}

TEST(Train, PeriodicCheckpoints) {
  const auto ds = synth_dataset(2, 3, 32);
  TrainConfig cfg;
  cfg.steps = 4;
  cfg.batch_size = 1;
  cfg.checkpoint_every = 2;
  TrainHooks hooks;
  hooks.checkpoint_dir = temp_dir("ckpts");
  const auto r = train(ds, {false, false}, tiny_model_config(), cfg, {}, FeatureExtractor<float>::make({}), hooks);
  EXPECT_TRUE(std::filesystem::exists(hooks.checkpoint_dir / "step_000002.ckpt"));
  CheckpointInfo info;
  const auto m = load_checkpoint<float>(hooks.checkpoint_dir / "step_000004.ckpt", &info);
  EXPECT_EQ(m, r.model);
  EXPECT_EQ(info.step, 4);
}
