#pragma once

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "flock/error.hpp"
#include "flock/features.hpp"
#include "flock/seqnet/model.hpp"

namespace flock::seqnet {

enum class Optimizer { sgd, adam };

std::string to_string(Optimizer o);
Optimizer optimizer_from(std::string_view s);

struct TrainConfig {
  double learning_rate = 0.001;
  int max_epochs = 1000;
  int batch_size = 32;
  int early_stop_patience = 50;
  double min_delta = 0.0;  // improvement needed to reset patience
  ClassWeights class_weights{};
  Optimizer optimizer = Optimizer::adam;
  double clip_norm = 5.0;  // global-norm clipping, recurrent models only; <= 0 disables
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double elapsed_s = 0.0;
};

struct TrainingHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 0 when no epoch improved on the initial parameters
  bool stopped_early = false;
};

struct TrainResult {
  SequenceModel model;
  TrainingHistory history;
};

/// Minibatch training on samples scaled with model.scaler, which must
/// already be fitted on the training split. Parameters from the epoch with
/// the lowest validation loss are restored before returning.
TrainResult train(SequenceModel model, std::span<const PairSample> train_set, std::span<const PairSample> val_set,
                  const TrainConfig& cfg);

struct ValidationSplit {
  std::vector<PairSample> train;
  std::vector<PairSample> val;
};

/// Stratified hold-out: round(fraction * n) of each label goes to val,
/// at least one per label when that label has two or more samples.
ValidationSplit carve_validation(std::vector<PairSample> samples, double fraction, std::uint64_t seed);

/// The same carve for any type with an int `label` member; returns
/// (kept, held_out).
template <typename T>
std::pair<std::vector<T>, std::vector<T>> carve_stratified(std::vector<T> samples, double fraction,
                                                           std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw InvalidConfig("validation fraction must lie in [0, 1)");
  std::pair<std::vector<T>, std::vector<T>> out;
  Rng rng(seed);
  for (int label : {0, 1}) {
    std::vector<T> group;
    for (auto& s : samples)
      if (s.label == label) group.push_back(std::move(s));
    rng.shuffle(group);
    auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group.size())));
    if (fraction > 0.0 && k == 0 && group.size() >= 2) k = 1;
    for (std::size_t i = 0; i < group.size(); ++i) (i < k ? out.second : out.first).push_back(std::move(group[i]));
  }
  return out;
}

struct Evaluation {
  double accuracy = 0.0;
  double mean_loss = 0.0;
  std::vector<double> probabilities;
};

/// Probabilities for unscaled samples (the model's scaler is applied).
Evaluation evaluate(const SequenceModel& model, std::span<const PairSample> samples, double threshold = 0.5,
                    ClassWeights weights = {});

void write_history_csv(std::ostream& out, const TrainingHistory& history);

}  // namespace flock::seqnet
