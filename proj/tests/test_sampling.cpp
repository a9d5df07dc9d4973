#include <gtest/gtest.h>

#include <cmath>

#include "subgrad/sampling.hpp"

using namespace subgrad;

TEST(Sampling, RademacherMean) {
  SampleStream stream(DistributionSpec::rademacher(), {11, 0});
  const std::size_t n = 1000000;
  double sum = 0;
  for (std::size_t k = 0; k < n; ++k) sum += stream.at(k)[0];
  EXPECT_LE(std::abs(sum / double(n)), 4.0 / std::sqrt(double(n)));
}

TEST(Sampling, UniformVariance) {
  SampleStream stream(DistributionSpec::uniform_box({-1.0}, {1.0}), {12, 0});
  const std::size_t n = 1000000;
  double sum = 0, sum_sq = 0;
  for (std::size_t k = 0; k < n; ++k) {
    double x = stream.at(k)[0];
    sum += x;
    sum_sq += x * x;
  }
  double mean = sum / double(n);
  double var = sum_sq / double(n) - mean * mean;
  EXPECT_NEAR(var, 1.0 / 3.0, 0.01 / 3.0);
}

TEST(Sampling, TruncatedGaussianStaysInBox) {
  SampleStream stream(DistributionSpec::truncated_gaussian(0.0, 1.0, {-2.0}, {2.0}),
                      {13, 0});
  const std::size_t n = 10000000;
  for (std::size_t k = 0; k < n; ++k) {
    double x = stream.at(k)[0];
    ASSERT_GE(x, -2.0);
    ASSERT_LE(x, 2.0);
  }
}

TEST(Sampling, TruncatedGaussianAcceptanceRate) {
  SampleStream stream(DistributionSpec::truncated_gaussian(0.0, 1.0, {-2.0}, {2.0}),
                      {14, 0});
  DrawStats stats;
  std::size_t k = 0;
  while (stats.proposals < 1000000) stream.at(k++, &stats);
  double observed = double(stats.accepts) / double(stats.proposals);
  double expected = std::erf(2.0 / std::sqrt(2.0));  // Phi(2) - Phi(-2)
  EXPECT_NEAR(observed, expected, 0.005 * expected);
}

TEST(Sampling, StreamDeterminismAndCloning) {
  DistributionSpec dist = DistributionSpec::truncated_gaussian(0.5, 2.0, {-1.0, -1.0},
                                                               {3.0, 3.0});
  SampleStream a(dist, {99, 5});
  SampleStream b(dist, {99, 5});
  for (std::size_t k : {0ul, 17ul, 12345ul, 3ul}) {
    EXPECT_EQ(a.at(k), b.at(k));
    EXPECT_EQ(a.at(k), a.at(k));  // re-addressable at any index
  }
}

TEST(Sampling, ProductMixture) {
  auto dist = DistributionSpec::product_mixture(
      {{1.0, 0.0}, {0.0, 1.0}}, {0.25, 0.75},
      {DistributionSpec::uniform_box({0.0}, {1.0}),
       DistributionSpec::uniform_box({2.0}, {3.0})});
  EXPECT_EQ(dist.dim(), 3u);
  SampleStream stream(dist, {21, 0});
  std::size_t first = 0;
  const std::size_t n = 100000;
  for (std::size_t k = 0; k < n; ++k) {
    Vec s = stream.at(k);
    ASSERT_EQ(s.size(), 3u);
    if (s[0] == 1.0) {
      ++first;
      EXPECT_EQ(s[1], 0.0);
      EXPECT_GE(s[2], 0.0);
      EXPECT_LE(s[2], 1.0);
    } else {
      EXPECT_EQ(s[0], 0.0);
      EXPECT_EQ(s[1], 1.0);
      EXPECT_GE(s[2], 2.0);
      EXPECT_LE(s[2], 3.0);
    }
  }
  EXPECT_NEAR(double(first) / double(n), 0.25, 4.0 * std::sqrt(0.25 * 0.75 / double(n)));
}

TEST(Sampling, InvalidSpecs) {
  auto expect_invalid = [](auto&& fn) {
    try {
      fn();
      FAIL() << "expected InvalidSpec";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
    }
  };
  expect_invalid([] { DistributionSpec::discrete_atoms({}, {}); });
  expect_invalid([] { DistributionSpec::discrete_atoms({{1.0}}, {0.5}); });
  expect_invalid([] { DistributionSpec::uniform_box({1.0}, {-1.0}); });
  expect_invalid([] { DistributionSpec::truncated_gaussian(0.0, 0.0, {-1.0}, {1.0}); });
  expect_invalid([] { DistributionSpec::truncated_gaussian(0.0, -2.0, {-1.0}, {1.0}); });
}

TEST(Sampling, SupportRadius) {
  auto d = DistributionSpec::uniform_box({-1.0, -2.0}, {0.5, 1.0});
  EXPECT_DOUBLE_EQ(d.support_radius(), std::sqrt(1.0 + 4.0));
}
