#include <cmath>

#include <gtest/gtest.h>

#include "refsr/losses.hpp"
#include "support.hpp"

using namespace refsr;
using namespace testing_support;

namespace {

FeatureExtractor<double> small_extractor() { return FeatureExtractor<double>::make({{4, 6, 8}, 3, 5}); }

std::vector<Tensor<double>> images(int n, std::uint64_t seed) {
  std::vector<Tensor<double>> v;
  for (int i = 0; i < n; ++i) v.push_back(random_image<double>(8, 8, seed + i));
  return v;
}

/// Vector relative error between an analytic gradient and central differences of f.
template <class F>
double gradient_rel_error(Tensor<double> x, const Tensor<double>& analytic, F f, double eps = 1e-6) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + eps;
    const double fp = f(x);
    x.data()[i] = keep - eps;
    const double fm = f(x);
    x.data()[i] = keep;
    const double fd = (fp - fm) / (2 * eps);
    num += (fd - analytic.data()[i]) * (fd - analytic.data()[i]);
    den += fd * fd;
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(L1, MeanAbsoluteDifference) {
  Tensor<double> a(1, 2, 1), b(1, 2, 1);
  a.data()[0] = 0.5;
  a.data()[1] = 0.1;
  b.data()[0] = 0.25;
  b.data()[1] = 0.3;
  EXPECT_DOUBLE_EQ(l1_loss(a, b), (0.25 + 0.2) / 2);
  EXPECT_DOUBLE_EQ(l1_loss(a, a), 0.0);
  EXPECT_THROW(l1_loss(a, Tensor<double>(2, 1, 1)), DataError);
}

TEST(Perceptual, ZeroForIdenticalAndScaledEuclidean) {
  const auto phi = small_extractor();
  const auto a = random_image<double>(8, 8, 1), b = random_image<double>(8, 8, 2);
  EXPECT_DOUBLE_EQ(perceptual_loss<double>(a, a, phi), 0.0);
  const auto fa = phi.features(a), fb = phi.features(b);
  double sq = 0.0;
  for (std::size_t i = 0; i < fa.size(); ++i) sq += (fa.data()[i] - fb.data()[i]) * (fa.data()[i] - fb.data()[i]);
  EXPECT_NEAR(perceptual_loss<double>(a, b, phi), std::sqrt(sq) / std::sqrt(static_cast<double>(fa.size())), 1e-12);
}

TEST(Perceptual, ExtractorIsFrozenAndSeeded) {
  const auto a = FeatureExtractor<float>::make({}), b = FeatureExtractor<float>::make({});
  EXPECT_EQ(a.params(), b.params());
  const auto f = a.features(random_image(160, 160, 1));
  EXPECT_EQ(f.height(), 5);
  EXPECT_EQ(f.channels(), 64);
}

TEST(Perceptual, UninitializedExtractorIsConfigError) {
  FeatureExtractor<float> phi;
  EXPECT_THROW(phi.features(random_image(8, 8, 1)), ConfigError);
}

TEST(Losses, CleanAndBackdoorUseTheirWeights) {
  const auto phi = small_extractor();
  const auto p = random_image<double>(8, 8, 1), t = random_image<double>(8, 8, 2);
  LossWeights w{2.0, 3.0, 5.0, 7.0};
  const double rec = l1_loss<double>(p, t), per = perceptual_loss<double>(p, t, phi);
  EXPECT_NEAR(clean_loss<double>(p, t, phi, w).total, 2 * rec + 3 * per, 1e-12);
  EXPECT_NEAR(backdoor_loss<double>(p, t, phi, w).total, 5 * rec + 7 * per, 1e-12);
  LossWeights bad;
  bad.lambda2 = -1;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(TotalLoss, GradientsMatchFiniteDifferences) {
  const auto phi = small_extractor();
  const auto preds = images(4, 10), targets = images(4, 20);
  const std::vector<bool> poisoned = {false, true, false, true};
  const LossWeights w;
  std::vector<Tensor<double>> grads;
  total_loss(preds, targets, poisoned, phi, w, &grads);
  for (std::size_t s = 0; s < preds.size(); ++s) {
    const double rel = gradient_rel_error(preds[s], grads[s], [&](const Tensor<double>& x) {
      auto p = preds;
      p[s] = x;
      return total_loss(p, targets, poisoned, phi, w).total;
    });
    EXPECT_LE(rel, 1e-2) << "sample " << s;
  }
}

TEST(TotalLoss, PartitionConsistency) {
  const auto phi = small_extractor();
  const auto preds = images(5, 30), targets = images(5, 40);
  const std::vector<bool> poisoned = {true, false, false, true, false};
  const LossWeights w;
  const auto t = total_loss(preds, targets, poisoned, phi, w);
  double c = 0.0, b = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    (poisoned[i] ? b : c) += (poisoned[i] ? backdoor_loss<double>(preds[i], targets[i], phi, w)
                                          : clean_loss<double>(preds[i], targets[i], phi, w))
                                 .total;
  EXPECT_EQ(t.n_clean, 3);
  EXPECT_EQ(t.n_poisoned, 2);
  EXPECT_EQ(t.clean, c / 3);
  EXPECT_EQ(t.backdoor, b / 2);
  EXPECT_EQ(t.total, t.clean + t.backdoor);
}

TEST(TotalLoss, AbsentTermContributesZero) {
  const auto phi = small_extractor();
  const auto preds = images(3, 50), targets = images(3, 60);
  const auto all_clean = total_loss(preds, targets, {false, false, false}, phi, LossWeights{});
  EXPECT_EQ(all_clean.backdoor, 0.0);
  EXPECT_EQ(all_clean.total, all_clean.clean);
  const auto all_poisoned = total_loss(preds, targets, {true, true, true}, phi, LossWeights{});
  EXPECT_EQ(all_poisoned.clean, 0.0);
  EXPECT_EQ(all_poisoned.total, all_poisoned.backdoor);
}

TEST(TotalLoss, BatchMismatchIsDataError) {
  const auto phi = small_extractor();
  EXPECT_THROW(total_loss(images(2, 1), images(3, 1), {false, true}, phi, LossWeights{}), DataError);
}
