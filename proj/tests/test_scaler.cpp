#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "flock/error.hpp"
#include "flock/features.hpp"
#include "flock/random.hpp"

using namespace flock;

namespace {

PairSample sample_from(const FeatureMatrix& m) { return PairSample{1, 2, m, 0}; }

std::vector<PairSample> random_samples(Rng& rng, int n, int L, double shift = 0.0) {
  std::vector<PairSample> out;
  for (int i = 0; i < n; ++i) {
    FeatureMatrix m(L, kFeatureCount);
    for (int r = 0; r < L; ++r)
      for (int c = 0; c < kFeatureCount; ++c) m(r, c) = std::abs(rng.normal(shift + 10.0 * (c + 1), 3.0 + c));
    out.push_back(sample_from(m));
  }
  return out;
}

}  // namespace

TEST(Quantile, TypeSevenRule) {
  EXPECT_EQ(quantile_linear({1, 2, 3, 4, 5}, 0.5), 3.0);
  EXPECT_EQ(quantile_linear({1, 2, 3, 4, 5}, 0.25), 2.0);
  EXPECT_EQ(quantile_linear({1, 2, 3, 4, 5}, 0.75), 4.0);
  EXPECT_EQ(quantile_linear({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_NEAR(quantile_linear({1, 2, 3, 4}, 0.1), 1.3, 1e-12);
  EXPECT_EQ(quantile_linear({7}, 0.9), 7.0);
  EXPECT_THROW(quantile_linear({}, 0.5), CannotFit);
}

TEST(Scaler, ColumnKindsAndStatistics) {
  FeatureMatrix m(11, kFeatureCount);
  for (int r = 0; r < 11; ++r) m.row(r) << r % 5 + 1, r, r, 2.0 * r, 7.0, r * r;
  const auto s = fit_scalers(std::vector{sample_from(m)});
  EXPECT_EQ(s.columns[0].kind, ScalerKind::robust);
  EXPECT_EQ(s.columns[1].kind, ScalerKind::minmax);
  for (int c = 2; c < 6; ++c) EXPECT_EQ(s.columns[static_cast<std::size_t>(c)].kind, ScalerKind::standard);

  const auto scaled = apply_scalers(s, sample_from(m)).features;
  // minmax on 0..10
  EXPECT_EQ(scaled(0, 1), 0.0);
  EXPECT_EQ(scaled(10, 1), 1.0);
  EXPECT_EQ(scaled(5, 1), 0.5);
  // robust: median of the pooled values maps to zero
  std::vector<double> col0(m.col(0).data(), m.col(0).data() + 11);
  EXPECT_EQ(s.columns[0].center, quantile_linear(col0, 0.5));
  EXPECT_EQ(s.columns[0].scale, quantile_linear(col0, 0.75) - quantile_linear(col0, 0.25));
  // standard: population mean/std
  const double mean = m.col(3).mean();
  const double sd = std::sqrt((m.col(3).array() - mean).square().mean());
  EXPECT_NEAR(s.columns[3].center, mean, 1e-12);
  EXPECT_NEAR(s.columns[3].scale, sd, 1e-12);
  EXPECT_NEAR(scaled.col(3).mean(), 0.0, 1e-12);
  // constant column is degenerate
  EXPECT_TRUE(s.columns[4].degenerate());
  EXPECT_EQ(scaled.col(4).cwiseAbs().maxCoeff(), 0.0);
  ASSERT_EQ(s.warnings.size(), 1u);
  EXPECT_NE(s.warnings[0].find("faceAngleDifference"), std::string::npos);
}

TEST(Scaler, RobustOnOneToFive) {
  FeatureMatrix m = FeatureMatrix::Zero(5, kFeatureCount);
  for (int r = 0; r < 5; ++r) m(r, 0) = r + 1;
  const auto s = fit_scalers(std::vector{sample_from(m)});
  EXPECT_EQ(s.columns[0].center, 3.0);
  EXPECT_EQ(s.columns[0].scale, 2.0);
  EXPECT_EQ(apply_scalers(s, sample_from(m)).features(2, 0), 0.0);
}

TEST(Scaler, RoundTripOnNonDegenerateColumns) {
  Rng rng(6);
  const auto train = random_samples(rng, 20, 15);
  const auto s = fit_scalers(train);
  for (const auto& x : random_samples(rng, 30, 15, 5.0)) {
    const auto back = inverse_apply(s, apply_scalers(s, x).features);
    EXPECT_LE((back - x.features).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Scaler, PooledOverStepsAndSamples) {
  Rng rng(7);
  const auto train = random_samples(rng, 4, 9);
  FeatureMatrix stacked(36, kFeatureCount);
  for (int i = 0; i < 4; ++i) stacked.middleRows(9 * i, 9) = train[static_cast<std::size_t>(i)].features;
  EXPECT_EQ(fit_scalers(train).columns, fit_scalers(std::vector{sample_from(stacked)}).columns);
}

TEST(Scaler, TrainAndTestFitsDiffer) {
  Rng rng(8);
  const auto train = random_samples(rng, 10, 10);
  const auto test = random_samples(rng, 10, 10, 40.0);
  EXPECT_FALSE(fit_scalers(train) == fit_scalers(test));
}

TEST(Scaler, ErrorsAndSerialization) {
  EXPECT_THROW(fit_scalers(std::vector<PairSample>{}), CannotFit);
  Rng rng(9);
  const auto s = fit_scalers(random_samples(rng, 5, 5));
  const auto back = scaler_state_from(to_key_values(s));
  EXPECT_TRUE(back == s);
  auto kv = to_key_values(s);
  kv["scaler.version"] = "2";
  EXPECT_THROW(scaler_state_from(kv), InvalidInput);
  FeatureMatrix wrong(3, 4);
  EXPECT_THROW(apply_scalers_inplace(s, wrong), InvalidInput);
}
