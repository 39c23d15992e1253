#include <gtest/gtest.h>

#include <vector>

#include "flock/error.hpp"
#include "flock/features.hpp"
#include "flock/random.hpp"
#include "oracles.hpp"

using namespace flock;

namespace {

std::vector<Point2> walk(Rng& rng, std::size_t n) {
  std::vector<Point2> out;
  double x = rng.uniform(-100, 100), y = rng.uniform(-100, 100);
  for (std::size_t i = 0; i < n; ++i) {
    x += rng.normal(0, 5);
    y += rng.normal(0, 5);
    out.push_back({x, y});
  }
  return out;
}

}  // namespace

TEST(Dtw, Examples) {
  Rng rng(1);
  const auto a = walk(rng, 17);
  EXPECT_EQ(dtw_distance(a, a), 0.0);
  const std::vector<Point2> p{{0, 0}}, q{{3, 4}};
  EXPECT_EQ(dtw_distance(p, q), 5.0);
  const std::vector<Point2> s{{0, 0}, {1, 0}}, t{{0, 0}, {1, 0}, {2, 0}};
  EXPECT_EQ(dtw_distance(s, t), 1.0);
  EXPECT_EQ(oracle::brute_force_dtw(s, t), 1.0);
  EXPECT_THROW(dtw_distance({}, p), InvalidInput);
  EXPECT_THROW(fast_dtw_distance(p, {}, 1), InvalidInput);
  EXPECT_THROW(fast_dtw_distance(p, q, 0), InvalidInput);
}

TEST(Dtw, SymmetricNonNegativeAndMatchesBruteForce) {
  Rng rng(2);
  for (int i = 0; i < 300; ++i) {
    const auto a = walk(rng, 1 + rng.below(7)), b = walk(rng, 1 + rng.below(7));
    const double d = dtw_distance(a, b);
    EXPECT_GE(d, 0.0);
    EXPECT_EQ(d, dtw_distance(b, a));
    EXPECT_NEAR(d, oracle::brute_force_dtw(a, b), 1e-9);
  }
}

TEST(Dtw, PrefixCostsMatchPrefixDistances) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const auto a = walk(rng, 1 + rng.below(20)), b = walk(rng, 1 + rng.below(20));
    const auto costs = dtw_prefix_costs(a, b);
    ASSERT_EQ(costs.size(), std::min(a.size(), b.size()));
    for (std::size_t k = 0; k < costs.size(); ++k)
      EXPECT_NEAR(costs[k], dtw_distance(std::span(a).first(k + 1), std::span(b).first(k + 1)), 1e-9);
  }
}

TEST(FastDtw, IdentityAndBaseCase) {
  Rng rng(4);
  const auto a = walk(rng, 40);
  EXPECT_EQ(fast_dtw_distance(a, a, 1), 0.0);
  for (int i = 0; i < 50; ++i) {
    const auto p = walk(rng, 1 + rng.below(2)), q = walk(rng, 1 + rng.below(2));
    EXPECT_NEAR(fast_dtw_distance(p, q, 1), dtw_distance(p, q), 1e-12);
  }
}

TEST(FastDtw, NeverBelowExactAndConvergesWithRadius) {
  Rng rng(5);
  for (int i = 0; i < 40; ++i) {
    const auto a = walk(rng, 2 + rng.below(60)), b = walk(rng, 2 + rng.below(60));
    const double exact = dtw_distance(a, b);
    for (int r : {1, 2, 4, 8}) EXPECT_GE(fast_dtw_distance(a, b, r), exact - 1e-9);
    const int full = static_cast<int>(std::max(a.size(), b.size()));
    EXPECT_NEAR(fast_dtw_distance(a, b, full), exact, 1e-9);
  }
  const auto a = walk(rng, 50), b = walk(rng, 50);
  EXPECT_NEAR(fast_dtw_distance(a, b, 50), dtw_distance(a, b), 1e-9);
}
