#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "refsr/metrics.hpp"
#include "support.hpp"

using namespace refsr;
using namespace testing_support;

TEST(Luma, Bt601Endpoints) {
  EXPECT_DOUBLE_EQ(luma_bt601(0, 0, 0), 16.0);
  EXPECT_NEAR(luma_bt601(1, 1, 1), 235.0, 1e-12);
  EXPECT_NEAR(luma_bt601(1, 0, 0), 81.481, 1e-12);
}

TEST(Psnr, IdenticalIsInfinite) {
  const auto a = random_image(16, 16, 3);
  EXPECT_TRUE(std::isinf(psnr_y(a, a)));
  EXPECT_GT(psnr_y(a, a), 0.0);
}

TEST(Psnr, UniformOffsetClosedForm) {
  const auto f = metric_fixtures()[1];
  const double expected = 20.0 * std::log10(255.0 / 16.0);
  EXPECT_NEAR(psnr_y(f.a, f.b), expected, 1e-9);
  EXPECT_NEAR(expected, 24.05, 0.005);
}

TEST(Psnr, Symmetric) {
  const auto a = random_image(20, 20, 4), b = random_image(20, 20, 5);
  EXPECT_DOUBLE_EQ(psnr_y(a, b), psnr_y(b, a));
}

TEST(Psnr, ShapeMismatchThrows) {
  EXPECT_THROW(psnr_y(random_image(8, 8, 1), random_image(8, 9, 1)), DataError);
}

TEST(Psnr, CropRemovesBorderDifferences) {
  auto a = constant_image(20, 20, 0.5, 0.5, 0.5);
  auto b = a;
  for (int c = 0; c < 3; ++c) b(0, 0, c) = 0.0f;
  EXPECT_FALSE(std::isinf(psnr_y(a, b)));
  EXPECT_TRUE(std::isinf(psnr_y(a, b, 4)));
}

TEST(Ssim, IdenticalIsOne) {
  const auto a = random_image(24, 24, 6);
  EXPECT_NEAR(ssim_y(a, a), 1.0, 1e-12);
}

TEST(Ssim, ConstantImagesZeroVarianceClosedForm) {
  const auto a = constant_image<double>(16, 16, 0.2, 0.2, 0.2);
  const auto b = constant_image<double>(16, 16, 0.6, 0.6, 0.6);
  const double mx = luma_bt601(0.2, 0.2, 0.2), my = luma_bt601(0.6, 0.6, 0.6);
  const double c1 = std::pow(0.01 * 255.0, 2);
  EXPECT_NEAR(ssim_y(a, b), (2 * mx * my + c1) / (mx * mx + my * my + c1), 1e-9);
}

TEST(Ssim, RangeOnRandomPairs) {
  for (int i = 0; i < 100; ++i) {
    const double s = ssim_y(random_image(12, 14, 100 + i), random_image(12, 14, 300 + i));
    EXPECT_LE(std::abs(s), 1.0);
  }
}

TEST(Ssim, SmallerThanWindowThrows) {
  EXPECT_THROW(ssim_y(random_image(10, 20, 1), random_image(10, 20, 2)), DataError);
}

TEST(MetricOracle, FixturesMatchDirectFormula) {
  for (const auto& f : metric_fixtures()) {
    SCOPED_TRACE(f.name);
    const double p = psnr_y(f.a, f.b), po = oracle::psnr(to_oracle(f.a), to_oracle(f.b));
    if (std::isinf(po)) EXPECT_TRUE(std::isinf(p));
    else EXPECT_NEAR(p, po, 1e-9);
    EXPECT_NEAR(ssim_y(f.a, f.b), oracle::ssim(to_oracle(f.a), to_oracle(f.b)), 1e-6);
  }
}

TEST(MetricOracle, FloatImagesAgreeWithOracle) {
  const auto a = random_image(24, 28, 7), b = random_image(24, 28, 8);
  EXPECT_NEAR(psnr_y(a, b), oracle::psnr(to_oracle(a), to_oracle(b)), 1e-9);
  EXPECT_NEAR(ssim_y(a, b), oracle::ssim(to_oracle(a), to_oracle(b)), 1e-6);
}
