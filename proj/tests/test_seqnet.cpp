#include <gtest/gtest.h>

#include <cmath>

#include "flock/error.hpp"
#include "flock/seqnet/model.hpp"

using namespace flock;
using namespace flock::seqnet;

namespace {

FeatureMatrix random_input(Rng& rng, int L) {
  FeatureMatrix m(L, kFeatureCount);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

ModelConfig config_for(Arch a, std::uint64_t seed = 1) {
  ModelConfig c;
  c.arch = a;
  c.hidden_size = 8;
  c.heads = 2;
  c.seed = seed;
  c.sequence_length = 6;
  return c;
}

// Forward without the model's scaler, which is identity-free by default.
double raw_forward(const SequenceModel& m, const FeatureMatrix& x) { return forward(m, x, true); }

class EachArch : public ::testing::TestWithParam<Arch> {};

}  // namespace

TEST_P(EachArch, ZeroHeadGivesSigmoidOfBias) {
  auto m = make_model(config_for(GetParam()));
  m.params.get("head.w").setZero();
  Rng rng(1);
  const auto x = random_input(rng, 6);
  EXPECT_EQ(raw_forward(m, x), 0.5);
  m.params.get("head.b")(0, 0) = 0.7;
  EXPECT_EQ(raw_forward(m, x), sigmoid(0.7));
}

TEST_P(EachArch, DeterministicAndInUnitInterval) {
  const auto a = make_model(config_for(GetParam(), 3));
  const auto b = make_model(config_for(GetParam(), 3));
  EXPECT_TRUE(a.params == b.params);
  EXPECT_FALSE(a.params == make_model(config_for(GetParam(), 4)).params);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    FeatureMatrix x = random_input(rng, 1 + static_cast<int>(rng.below(10)));
    x *= std::pow(10.0, rng.uniform(-3, 4));
    const double p = raw_forward(a, x);
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
    EXPECT_EQ(p, raw_forward(b, x));
  }
}

TEST_P(EachArch, BatchedLogitsMatchSingleForward) {
  const auto m = make_model(config_for(GetParam(), 5));
  Rng rng(3);
  std::vector<FeatureMatrix> batch;
  for (int i = 0; i < 7; ++i) batch.push_back(random_input(rng, 6));
  const auto z = forward_logits(m.config, m.params, batch);
  for (int i = 0; i < 7; ++i)
    EXPECT_NEAR(sigmoid(z(i)), raw_forward(m, batch[static_cast<std::size_t>(i)]), 1e-12);
}

TEST_P(EachArch, RejectsNonFiniteInput) {
  const auto m = make_model(config_for(GetParam()));
  Rng rng(4);
  auto x = random_input(rng, 6);
  x(2, 3) = NAN;
  EXPECT_THROW(raw_forward(m, x), InvalidInput);
  x(2, 3) = INFINITY;
  EXPECT_THROW(raw_forward(m, x), InvalidInput);
  EXPECT_THROW(raw_forward(m, FeatureMatrix(6, 5)), InvalidInput);
}

TEST_P(EachArch, ZeroInputGivesZeroInputWeightGradient) {
  const auto m = make_model(config_for(GetParam(), 7));
  std::vector<FeatureMatrix> batch(3, FeatureMatrix::Zero(6, kFeatureCount));
  const std::vector<int> labels{1, 0, 1};
  const auto g = backward(m.config, m.params, batch, labels);
  const auto& first = g.grads.tensors().front();
  EXPECT_EQ(first.value.cwiseAbs().maxCoeff(), 0.0) << first.name;
}

TEST_P(EachArch, DoublingClassWeightsDoublesGradient) {
  const auto m = make_model(config_for(GetParam(), 8));
  Rng rng(5);
  std::vector<FeatureMatrix> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(random_input(rng, 6));
  const std::vector<int> labels{1, 0, 0, 1};
  const auto g1 = backward(m.config, m.params, batch, labels, {0.7, 1.3});
  const auto g2 = backward(m.config, m.params, batch, labels, {1.4, 2.6});
  EXPECT_NEAR(g2.mean_loss, 2.0 * g1.mean_loss, 1e-12);
  for (std::size_t t = 0; t < g1.grads.tensors().size(); ++t)
    EXPECT_LE((g2.grads.tensors()[t].value - 2.0 * g1.grads.tensors()[t].value).cwiseAbs().maxCoeff(), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Archs, EachArch, ::testing::Values(Arch::rnn, Arch::lstm, Arch::transformer),
                         [](const auto& info) { return to_string(info.param); });

TEST(Transformer, PermutationInvarianceWithoutPositions) {
  auto c = config_for(Arch::transformer, 9);
  c.positional_encoding = false;
  const auto m = make_model(c);
  auto cp = c;
  cp.positional_encoding = true;
  const auto mp = make_model(cp);
  Rng rng(6);
  for (int i = 0; i < 20; ++i) {
    const auto x = random_input(rng, 6);
    FeatureMatrix shuffled = x;
    shuffled.row(0).swap(shuffled.row(4));
    shuffled.row(1).swap(shuffled.row(5));
    EXPECT_NEAR(raw_forward(m, x), raw_forward(m, shuffled), 1e-12);
    EXPECT_NE(raw_forward(mp, x), raw_forward(mp, shuffled));
  }
}

TEST(Loss, Examples) {
  EXPECT_NEAR(loss(0.5, 1), std::log(2.0), 1e-15);
  EXPECT_NEAR(loss(0.5, 1, {1, 2}), 2.0 * std::log(2.0), 1e-15);
  EXPECT_NEAR(loss(1.0, 1), -std::log(1.0 - kProbEpsilon), 1e-15);
  EXPECT_NEAR(loss(0.0, 0), -std::log(1.0 - kProbEpsilon), 1e-15);
  EXPECT_NEAR(loss(0.0, 1), -std::log(kProbEpsilon), 1e-9);
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform();
    EXPECT_GT(loss(p, 1), 0.0);
    EXPECT_GT(loss(p, 0), 0.0);
  }
  EXPECT_THROW(loss(0.5, 2), InvalidInput);
}

TEST(Prediction, InclusiveThreshold) {
  EXPECT_EQ(make_prediction(0.89, 0.9).label, 0);
  EXPECT_EQ(make_prediction(0.90, 0.9).label, 1);
  EXPECT_EQ(make_prediction(0.90, 0.9).threshold_used, 0.9);
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const double p = rng.uniform(), t = rng.uniform();
    EXPECT_EQ(make_prediction(p, t).label == 1, p >= t);
  }
}

TEST(PredictPair, UsesStoredScaler) {
  Rng rng(9);
  auto m = make_model(config_for(Arch::lstm, 10));
  std::vector<TrajectoryPoint> a, b;
  for (int k = 0; k < 6; ++k) {
    a.push_back(TrajectoryPoint::make(500 * k, 1, 100.0 * k, 0, 1000, 0.1, 0.1));
    b.push_back(TrajectoryPoint::make(500 * k, 2, 100.0 * k + 700, 50, 1100, 0.2, 0.0));
  }
  const auto f = featurize_pair(a, b);
  m.scaler = fit_scalers(std::vector{PairSample{1, 2, f, 1}, PairSample{1, 2, 2.0 * f, 0}});
  const auto r = predict_pair(m, a, b, 0.5);
  EXPECT_EQ(r.probability, forward(m, f));
  EXPECT_EQ(r.probability, raw_forward(m, apply_scalers(m.scaler, PairSample{1, 2, f, 1}).features));
}

TEST(ModelConfig, Validation) {
  auto c = config_for(Arch::transformer);
  c.hidden_size = 10;
  c.heads = 4;
  EXPECT_THROW(make_model(c), InvalidConfig);
  c.heads = 5;
  EXPECT_NO_THROW(make_model(c));
  c.dropout = 1.0;
  EXPECT_THROW(c.validate(), InvalidConfig);
  EXPECT_EQ(arch_from("lstm"), Arch::lstm);
  EXPECT_THROW(arch_from("gru"), InvalidConfig);
}
