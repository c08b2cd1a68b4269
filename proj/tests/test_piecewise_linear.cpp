// Copyright (C) 2026 The Panofuse Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "panofuse/piecewise_linear.hpp"
#include "panofuse/rng.hpp"

namespace panofuse {
namespace {

TEST(PiecewiseLinear, IdentityReturnsInput) {
  const auto g = PiecewiseLinearMap::identity(-1.0, 3.0, 8);
  EXPECT_TRUE(g.is_identity());
  for (const double x : {-5.0, -1.0, 0.1234, 2.9, 3.0, 7.5}) EXPECT_DOUBLE_EQ(g(x), x);
  ImageF img(3, 2, 1, 0.75f);
  EXPECT_EQ(apply_plmap(g, img), ImageD(3, 2, 1, 0.75));
}

TEST(PiecewiseLinear, SingleSegmentArithmetic) {
  const std::vector<double> slopes{2.0};
  const auto g = PiecewiseLinearMap::from_slopes({0.0, 1.0}, 0.3, slopes);
  EXPECT_NEAR(g(0.5), 1.3, 1e-15);
  EXPECT_NEAR(g.scale(0), 2.0, 1e-15);
  EXPECT_NEAR(g.shift(0), 0.3, 1e-15);
}

TEST(PiecewiseLinear, ContinuousAtKnotsAndExtrapolatesEndSegments) {
  const PiecewiseLinearMap g({0.0, 1.0, 2.0}, {0.0, 2.0, 2.5});
  for (const double k : {1.0}) {
    EXPECT_NEAR(g(k - 1e-12), g(k + 1e-12), 1e-10);
  }
  EXPECT_DOUBLE_EQ(g(-1.0), -2.0);
  EXPECT_DOUBLE_EQ(g(3.0), 3.0);
  EXPECT_EQ(g.segment_of(-1.0), 0);
  EXPECT_EQ(g.segment_of(1.0), 1);
  EXPECT_EQ(g.segment_of(5.0), 1);
}

TEST(PiecewiseLinear, RandomMonotoneMapInverts) {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    std::vector<double> slopes(8);
    for (std::size_t k = 0; k < slopes.size(); ++k) {
      slopes[k] = 0.05 + 3.0 * rng::uniform(trial, k);
    }
    const auto g = PiecewiseLinearMap::from_slopes(PiecewiseLinearMap::uniform_knots(0.0, 2.0, 8),
                                                   rng::uniform(trial, 99), slopes);
    ASSERT_TRUE(g.is_monotone(0.05));
    for (int s = 0; s <= 100; ++s) {
      const double x = -0.5 + 3.0 * s / 100.0;
      EXPECT_NEAR(g.inverse(g(x)), x, 1e-9);
      EXPECT_NEAR(g(g.inverse(g(x))), g(x), 1e-9);
    }
  }
}

TEST(PiecewiseLinear, RejectsInvalidInput) {
  EXPECT_THROW(PiecewiseLinearMap({0.0, 0.0}, {0.0, 1.0}), ConfigError);
  EXPECT_THROW(PiecewiseLinearMap({0.0}, {0.0}), ConfigError);
  EXPECT_THROW(PiecewiseLinearMap::identity(1.0, 1.0, 4), ConfigError);
  EXPECT_THROW(PiecewiseLinearMap::identity(0.0, 1.0, 0), ConfigError);
  const PiecewiseLinearMap flat({0.0, 1.0, 2.0}, {0.0, 1.0, 1.0});
  EXPECT_FALSE(flat.is_monotone(1e-3));
  EXPECT_THROW(flat.inverse(0.5), NumericError);
  ImageF img(1, 1, 1, std::nanf(""));
  EXPECT_THROW(apply_plmap(flat, img), NumericError);
}

}  // namespace
}  // namespace panofuse
