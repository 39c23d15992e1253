#include <gtest/gtest.h>

#include <cmath>

#include "flock/error.hpp"
#include "flock/features.hpp"
#include "flock/random.hpp"

using namespace flock;

namespace {

TrajectoryPoint pt(double x, double y, TimestampMs t = 0, double v = 0, double motion = 0, double face = 0) {
  return TrajectoryPoint::make(t, 1, x, y, v, motion, face);
}

std::vector<TrajectoryPoint> random_block(Rng& rng, std::size_t L) {
  std::vector<TrajectoryPoint> b;
  TimestampMs t = static_cast<TimestampMs>(rng.below(100000));
  double x = rng.uniform(-2e4, 2e4), y = rng.uniform(-2e4, 2e4);
  for (std::size_t k = 0; k < L; ++k) {
    t += 1 + static_cast<TimestampMs>(rng.below(1000));
    x += rng.normal(0, 300);
    y += rng.normal(0, 300);
    b.push_back(pt(x, y, t, rng.uniform(0, 3000), rng.uniform(-10, 10), rng.uniform(-10, 10)));
  }
  return b;
}

double circular_oracle(double a, double b) {
  const double d = std::fmod(std::abs(a - b), 2.0 * kPi);
  return std::min(d, 2.0 * kPi - d);
}

}  // namespace

TEST(InterDistance, Examples) {
  EXPECT_EQ(inter_distance(pt(0, 0), pt(3, 4)), 5.0);
  EXPECT_EQ(inter_distance(pt(1, 1), pt(1, 1)), 0.0);
  EXPECT_EQ(inter_distance(pt(-1, 0), pt(1, 0)), 2.0);
}

TEST(ScalarDiffs, Examples) {
  const auto d = scalar_abs_diffs(pt(0, 0, 0, 0, 3.0), pt(0, 0, 0, 0, -3.0));
  EXPECT_NEAR(d.dmotion_rad, 2.0 * kPi - 6.0, 1e-12);
  const auto z = scalar_abs_diffs(pt(1, 2, 3, 4, 0.5, 0.6), pt(1, 2, 3, 4, 0.5, 0.6));
  EXPECT_EQ(z.dt_ms, 0.0);
  EXPECT_EQ(z.dv_mm_s, 0.0);
  EXPECT_EQ(z.dmotion_rad, 0.0);
  EXPECT_EQ(z.dface_rad, 0.0);
  EXPECT_EQ(scalar_abs_diffs(pt(0, 0, 10, 1200), pt(0, 0, 4, 1500)).dv_mm_s, 300.0);
  EXPECT_EQ(scalar_abs_diffs(pt(0, 0, 10, 1200), pt(0, 0, 4, 1500)).dt_ms, 6.0);
}

TEST(ScalarDiffs, CircularAgainstOracle) {
  Rng rng(13);
  for (int i = 0; i < 5000; ++i) {
    const double a = rng.uniform(-kPi, kPi), b = rng.uniform(-kPi, kPi);
    const auto d = scalar_abs_diffs(pt(0, 0, 0, 0, a, b), pt(0, 0, 0, 0, b, a));
    ASSERT_NEAR(d.dmotion_rad, circular_oracle(a, b), 1e-12);
    ASSERT_NEAR(d.dface_rad, circular_oracle(a, b), 1e-12);
  }
}

TEST(Featurize, Examples) {
  Rng rng(1);
  const auto blk = random_block(rng, 12);
  for (auto mode : {DtwMode::full_broadcast, DtwMode::prefix}) {
    const auto f = featurize_pair(blk, blk, mode);
    ASSERT_EQ(f.rows(), 12);
    ASSERT_EQ(f.cols(), kFeatureCount);
    EXPECT_EQ(f.cwiseAbs().maxCoeff(), 0.0);
  }
  const std::vector<TrajectoryPoint> a{pt(0, 0)}, b{pt(3, 4)};
  const auto f = featurize_pair(a, b);
  Eigen::RowVectorXd expect(6);
  expect << 5, 0, 0, 0, 0, 5;
  EXPECT_EQ(f.row(0), expect);
  EXPECT_THROW(featurize_pair(a, blk), InvalidInput);
}

TEST(Featurize, ColumnsMatchDefinitions) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t L = 1 + rng.below(30);
    const auto a = random_block(rng, L), b = random_block(rng, L);
    const auto full = featurize_pair(a, b, DtwMode::full_broadcast);
    const auto pre = featurize_pair(a, b, DtwMode::prefix);
    const auto pa = positions(a), pb = positions(b);
    const double dtw = dtw_distance(pa, pb);
    for (std::size_t k = 0; k < L; ++k) {
      const auto r = static_cast<Eigen::Index>(k);
      EXPECT_DOUBLE_EQ(full(r, kInterDistance), std::hypot(a[k].x_mm - b[k].x_mm, a[k].y_mm - b[k].y_mm));
      EXPECT_EQ(full(r, kTimeDifference), std::abs(static_cast<double>(a[k].timestamp_ms - b[k].timestamp_ms)));
      EXPECT_EQ(full(r, kVelocityDifference), std::abs(a[k].velocity_mm_s - b[k].velocity_mm_s));
      EXPECT_NEAR(full(r, kMotionAngleDifference), circular_oracle(a[k].motion_angle_rad, b[k].motion_angle_rad),
                  1e-12);
      EXPECT_NEAR(full(r, kFaceAngleDifference), circular_oracle(a[k].face_angle_rad, b[k].face_angle_rad), 1e-12);
      EXPECT_EQ(full(r, kDtwValue), dtw);
      const std::span<const Point2> sa(pa), sb(pb);
      EXPECT_NEAR(pre(r, kDtwValue), dtw_distance(sa.first(k + 1), sb.first(k + 1)), 1e-9);
    }
    // column-range invariants
    EXPECT_TRUE(full.allFinite());
    EXPECT_GE(full.minCoeff(), 0.0);
    EXPECT_LE(full.col(kMotionAngleDifference).maxCoeff(), kPi);
    EXPECT_LE(full.col(kFaceAngleDifference).maxCoeff(), kPi);
    EXPECT_EQ(pre.leftCols(5), full.leftCols(5));
    EXPECT_NEAR(pre(static_cast<Eigen::Index>(L - 1), kDtwValue), dtw, 1e-9);
  }
}

TEST(Featurize, SampleCarriesIdsAndLabel) {
  Rng rng(3);
  const PairSampleRaw raw{4, 9, random_block(rng, 5), random_block(rng, 5), 1};
  const auto s = featurize(raw);
  EXPECT_EQ(s.agent_a, 4);
  EXPECT_EQ(s.agent_b, 9);
  EXPECT_EQ(s.label, 1);
  EXPECT_EQ(featurize_all({raw, raw}).size(), 2u);
  EXPECT_STREQ(feature_name(kDtwValue), "dtwValues");
  EXPECT_EQ(dtw_mode_from("prefix"), DtwMode::prefix);
  EXPECT_THROW(dtw_mode_from("sometimes"), InvalidConfig);
}
