#include "flock/seqnet/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <ostream>
#include <vector>

#include "flock/error.hpp"
#include "flock/keyvalue.hpp"

namespace flock::seqnet {

using Eigen::Index;
using Eigen::MatrixXd;

std::string to_string(Optimizer o) { return o == Optimizer::sgd ? "sgd" : "adam"; }

Optimizer optimizer_from(std::string_view s) {
  if (s == "sgd") return Optimizer::sgd;
  if (s == "adam") return Optimizer::adam;
  throw InvalidConfig("unknown optimizer '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw InvalidConfig("learning_rate must be > 0");
  if (batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (max_epochs < 0) throw InvalidConfig("max_epochs must be >= 0");
  if (early_stop_patience < 0) throw InvalidConfig("early_stop_patience must be >= 0");
  if (!(min_delta >= 0.0)) throw InvalidConfig("min_delta must be >= 0");
  if (!(class_weights.negative > 0.0 && class_weights.positive > 0.0))
    throw InvalidConfig("class weights must be positive");
}

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr Index kEvalChunk = 256;

struct Prepared {
  std::vector<FeatureMatrix> x;
  std::vector<int> y;
};

Prepared prepare(const ScalerState& scaler, std::span<const PairSample> samples) {
  Prepared p;
  p.x.reserve(samples.size());
  p.y.reserve(samples.size());
  for (const auto& s : samples) {
    p.x.push_back(s.features);
    apply_scalers_inplace(scaler, p.x.back());
    p.y.push_back(s.label);
  }
  return p;
}

struct Scores {
  double mean_loss = 0.0;
  double accuracy = 0.0;
  std::vector<double> probabilities;
};

Scores score(const ModelConfig& config, const ParameterSet& params, const Prepared& data, double threshold,
             ClassWeights weights) {
  Scores s;
  const auto n = static_cast<Index>(data.x.size());
  s.probabilities.reserve(data.x.size());
  double total = 0.0;
  Index correct = 0;
  for (Index start = 0; start < n; start += kEvalChunk) {
    const Index len = std::min(kEvalChunk, n - start);
    const auto z = forward_logits(config, params, std::span(data.x).subspan(static_cast<std::size_t>(start),
                                                                             static_cast<std::size_t>(len)));
    for (Index i = 0; i < len; ++i) {
      const double p = std::clamp(sigmoid(z(i)), kProbEpsilon, 1.0 - kProbEpsilon);
      const int y = data.y[static_cast<std::size_t>(start + i)];
      total += loss(p, y, weights);
      correct += make_prediction(p, threshold).label == y ? 1 : 0;
      s.probabilities.push_back(p);
    }
  }
  s.mean_loss = n > 0 ? total / static_cast<double>(n) : 0.0;
  s.accuracy = n > 0 ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
  return s;
}

class Stepper {
 public:
  Stepper(const TrainConfig& cfg, const ParameterSet& params)
      : cfg_(cfg), m_(params.zeros_like()), v_(params.zeros_like()) {}

  void step(ParameterSet& params, const ParameterSet& grads) {
    ++t_;
    auto& pt = params.tensors();
    const auto& gt = grads.tensors();
    if (cfg_.optimizer == Optimizer::sgd) {
      for (std::size_t i = 0; i < pt.size(); ++i) pt[i].value -= cfg_.learning_rate * gt[i].value;
      return;
    }
    const double c1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < pt.size(); ++i) {
      auto& m = m_.tensors()[i].value;
      auto& v = v_.tensors()[i].value;
      const auto& g = gt[i].value;
      m = kBeta1 * m + (1.0 - kBeta1) * g;
      v = kBeta2 * v + (1.0 - kBeta2) * g.cwiseAbs2();
      pt[i].value.array() -=
          cfg_.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
    }
  }

 private:
  const TrainConfig& cfg_;
  ParameterSet m_, v_;
  long t_ = 0;
};

}  // namespace

TrainResult train(SequenceModel model, std::span<const PairSample> train_set, std::span<const PairSample> val_set,
                  const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate();
  if (train_set.empty()) throw InvalidInput("training set is empty");
  if (val_set.empty()) throw InvalidInput("validation set is empty");

  const auto started = std::chrono::steady_clock::now();
  const auto elapsed = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };

  const Prepared tr = prepare(model.scaler, train_set);
  const Prepared va = prepare(model.scaler, val_set);
  const bool clip = model.config.arch != Arch::transformer && cfg.clip_norm > 0.0;

  Rng rng(cfg.seed);
  Stepper stepper(cfg, model.params);
  TrainingHistory history;

  double best = score(model.config, model.params, va, 0.5, cfg.class_weights).mean_loss;
  if (!std::isfinite(best)) throw TrainingDiverged(0);
  ParameterSet best_params = model.params;
  int wait = 0;

  std::vector<std::size_t> order(tr.x.size());
  std::vector<FeatureMatrix> bx;
  std::vector<int> by;
  int epoch = 0;
  for (epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    double train_total = 0.0;
    try {
      for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
        bx.clear();
        by.clear();
        for (std::size_t i = start; i < end; ++i) {
          bx.push_back(tr.x[order[i]]);
          by.push_back(tr.y[order[i]]);
        }
        Gradient g = backward(model.config, model.params, bx, by, cfg.class_weights, &rng);
        train_total += g.mean_loss * static_cast<double>(end - start);
        if (clip) {
          const double norm = std::sqrt(g.grads.squared_norm());
          if (norm > cfg.clip_norm) g.grads.scale(cfg.clip_norm / norm);
        }
        stepper.step(model.params, g.grads);
      }
    } catch (const NumericalFailure&) {
      throw TrainingDiverged(epoch);
    }
    if (!model.params.all_finite()) throw TrainingDiverged(epoch);

    Scores val;
    try {
      val = score(model.config, model.params, va, 0.5, cfg.class_weights);
    } catch (const NumericalFailure&) {
      throw TrainingDiverged(epoch);
    }
    if (!std::isfinite(val.mean_loss)) throw TrainingDiverged(epoch);

    history.epochs.push_back(
        {epoch, train_total / static_cast<double>(order.size()), val.mean_loss, val.accuracy, elapsed()});

    if (val.mean_loss < best - cfg.min_delta) {
      best = val.mean_loss;
      best_params = model.params;
      history.best_epoch = epoch;
      wait = 0;
    } else if (++wait >= cfg.early_stop_patience) {
      history.stopped_early = true;
      break;
    }
  }

  model.params = std::move(best_params);
  model.meta.epochs_run = static_cast<int>(history.epochs.size());
  model.meta.best_val_loss = best;
  model.meta.wall_time_s = elapsed();
  return {std::move(model), std::move(history)};
}

ValidationSplit carve_validation(std::vector<PairSample> samples, double fraction, std::uint64_t seed) {
  auto [kept, held] = carve_stratified(std::move(samples), fraction, seed);
  return {std::move(kept), std::move(held)};
}

Evaluation evaluate(const SequenceModel& model, std::span<const PairSample> samples, double threshold,
                    ClassWeights weights) {
  const Prepared data = prepare(model.scaler, samples);
  Scores s = score(model.config, model.params, data, threshold, weights);
  return {s.accuracy, s.mean_loss, std::move(s.probabilities)};
}

void write_history_csv(std::ostream& out, const TrainingHistory& history) {
  out << "epoch,train_loss,val_loss,val_accuracy,elapsed_s\n";
  for (const auto& e : history.epochs)
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
        << format_double(e.val_accuracy) << ',' << format_double(e.elapsed_s) << '\n';
}

}  // namespace flock::seqnet
