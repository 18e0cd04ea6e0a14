#include <cmath>

#include <gtest/gtest.h>

#include "refsr/png_io.hpp"
#include "refsr/procedural.hpp"
#include "refsr/dataset.hpp"
#include "refsr/triggers.hpp"
#include "support.hpp"

using namespace refsr;
using namespace testing_support;

namespace {

float max_abs_diff(const ImageTensor& a, const ImageTensor& b) {
  float m = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

class AllTriggers : public ::testing::TestWithParam<TriggerKind> {};

}  // namespace

TEST_P(AllTriggers, DeterministicShapeAndRange) {
  const Trigger t(TriggerSpec::make(GetParam(), {}, 3));
  const auto img = random_image(40, 48, 11);
  const auto a = t.apply(img), b = t.apply(img);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.same_shape(img));
  for (float v : a.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
  EXPECT_GT(max_abs_diff(a, img), 0.0f) << "trigger must change the image";
}

TEST_P(AllTriggers, InputNotModified) {
  const Trigger t(TriggerSpec::make(GetParam()));
  const auto img = random_image(32, 32, 12);
  const auto copy = img;
  (void)t.apply(img);
  EXPECT_EQ(img, copy);
}

INSTANTIATE_TEST_SUITE_P(Kinds, AllTriggers, ::testing::ValuesIn(kAllTriggers),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(TriggerKind, ParseRoundTripAndUnknown) {
  for (TriggerKind k : kAllTriggers) EXPECT_EQ(parse_trigger_kind(to_string(k)), k);
  EXPECT_THROW(parse_trigger_kind("sparkle"), ConfigError);
}

TEST(Badnet, WhitePatchBottomRight) {
  const auto img = constant_image(20, 20, 0.1, 0.2, 0.3);
  const auto out = apply_badnet(img, 8);
  EXPECT_EQ(out(19, 19, 0), 1.0f);
  EXPECT_EQ(out(12, 12, 2), 1.0f);
  EXPECT_EQ(out(11, 19, 0), img(11, 19, 0));
  EXPECT_EQ(out(19, 11, 1), img(19, 11, 1));
  EXPECT_THROW(apply_badnet(random_image(6, 6, 1), 8), DataError);
}

TEST(Blend, AlphaZeroIsIdentity) {
  const auto img = random_image(24, 24, 1);
  EXPECT_EQ(apply_blend(img, procedural::blend_key(24, 24), 0.0), img);
}

TEST(Blend, AlphaOneIsKey) {
  const auto key = procedural::blend_key(24, 24);
  EXPECT_LE(max_abs_diff(apply_blend(random_image(24, 24, 1), key, 1.0), key), 1e-7f);
}

TEST(Blend, KeyFromFile) {
  const auto dir = temp_dir("blend_key");
  const auto key = quantized(random_image(16, 16, 9));
  save_image(key, dir / "key.png");
  TriggerParams p;
  p.key_path = (dir / "key.png").string();
  p.alpha = 1.0;
  const Trigger t(TriggerSpec::make(TriggerKind::blend, p));
  EXPECT_LE(max_abs_diff(t.apply(random_image(16, 16, 3)), key), 1e-6f);
}

TEST(Filter, IdentityMatrixIsIdentity) {
  const auto img = random_image(16, 16, 2);
  EXPECT_EQ(apply_filter(img, kIdentityMatrix), img);
}

TEST(Filter, SepiaOfWhiteClampsToOne) {
  const auto out = apply_filter(constant_image(4, 4, 1, 1, 1), kSepiaMatrix);
  EXPECT_EQ(out(0, 0, 0), 1.0f);
  EXPECT_EQ(out(0, 0, 1), 1.0f);
  EXPECT_NEAR(out(0, 0, 2), 0.272 + 0.534 + 0.131, 1e-6);
}

TEST(Color, DeltaZeroIsIdentity) {
  const auto img = random_image(16, 16, 3);
  EXPECT_EQ(apply_color_shift(img, {0, 0, 0}), img);
}

TEST(Color, ShiftsChannels) {
  const auto out = apply_color_shift(constant_image(2, 2, 0.5, 0.5, 0.5));
  EXPECT_NEAR(out(0, 0, 0), 0.5 + 8.0 / 255, 1e-6);
  EXPECT_NEAR(out(0, 0, 1), 0.5 - 8.0 / 255, 1e-6);
}

TEST(Color, RejectsLargeDelta) {
  EXPECT_THROW(apply_color_shift(random_image(2, 2, 1), {33.0 / 255, 0, 0}), ConfigError);
  TriggerParams p;
  p.delta = {0, 0.2, 0};
  EXPECT_THROW(TriggerSpec::make(TriggerKind::color, p), ConfigError);
}

TEST(Wanet, StrengthZeroIsIdentity) {
  const auto img = random_image(32, 32, 4);
  EXPECT_EQ(apply_wanet(img, 4, 0.0, 1), img);
}

TEST(Wanet, ConstantShiftMatchesIntegerShiftInInterior) {
  const auto img = random_image(30, 34, 5);
  Tensor<double> flow(30, 34, 2);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 34; ++x) {
      flow(y, x, 0) = 3.0;
      flow(y, x, 1) = -2.0;
    }
  const auto out = warp_bilinear(img, flow);
  for (int y = 2; y < 30; ++y)
    for (int x = 0; x < 34 - 3; ++x)
      for (int c = 0; c < 3; ++c) ASSERT_EQ(out(y, x, c), img(y - 2, x + 3, c));
}

TEST(Wanet, FieldIsSeededAndBounded) {
  const auto a = wanet_field(40, 40, 4, 0.5, 1), b = wanet_field(40, 40, 4, 0.5, 1);
  const auto c = wanet_field(40, 40, 4, 0.5, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  double mean_abs = 0.0;
  for (double v : a.values()) mean_abs += std::abs(v);
  mean_abs /= static_cast<double>(a.size());
  EXPECT_GT(mean_abs, 0.5);
  EXPECT_LT(mean_abs, 10.0);
}

TEST(Refool, SmallBetaApproachesIdentity) {
  const auto img = random_image(20, 20, 6);
  const auto refl = procedural::reflection_layer(20, 20);
  EXPECT_LE(max_abs_diff(apply_refool(img, refl, 1e-9, 2.0), img), 1e-6f);
  EXPECT_GT(max_abs_diff(apply_refool(img, refl, 0.4, 2.0), img), 0.01f);
}

TEST(Refool, AddsBlurredReflection) {
  const auto img = constant_image(16, 16, 0.2, 0.2, 0.2);
  const auto refl = constant_image(16, 16, 0.5, 0.25, 0.0);
  const auto out = apply_refool(img, refl, 0.4, 2.0);
  EXPECT_NEAR(out(7, 7, 0), 0.2 + 0.4 * 0.5, 1e-6);
  EXPECT_NEAR(out(7, 7, 2), 0.2, 1e-6);
}

TEST(TriggerSpec, ValidationNamesField) {
  TriggerParams p;
  p.alpha = 1.5;
  try {
    TriggerSpec::make(TriggerKind::blend, p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("trigger.alpha"), std::string::npos);
  }
}
