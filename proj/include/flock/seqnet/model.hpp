#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "flock/features.hpp"
#include "flock/random.hpp"
#include "flock/types.hpp"

namespace flock::seqnet {

enum class Arch { rnn, lstm, transformer };

std::string to_string(Arch a);
Arch arch_from(std::string_view s);

struct ModelConfig {
  Arch arch = Arch::lstm;
  int input_dim = kFeatureCount;
  int hidden_size = 32;
  int num_layers = 1;
  int heads = 4;          // transformer
  int ff_multiplier = 4;  // transformer
  double dropout = 0.0;   // applied to the pooled representation while training
  std::uint64_t seed = 0;
  bool positional_encoding = true;  // transformer
  int sequence_length = 100;        // L the model was prepared for
  DtwMode dtw_mode = DtwMode::full_broadcast;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct NamedTensor {
  std::string name;
  Eigen::MatrixXd value;
};

/// Ordered collection of named parameter matrices. Gradients use the same
/// layout (zeros_like()).
class ParameterSet {
 public:
  Eigen::MatrixXd& add(std::string name, Eigen::Index rows, Eigen::Index cols);

  Eigen::MatrixXd& get(std::string_view name);
  const Eigen::MatrixXd& get(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<NamedTensor>& tensors() { return tensors_; }
  const std::vector<NamedTensor>& tensors() const { return tensors_; }

  ParameterSet zeros_like() const;
  std::size_t scalar_count() const;
  bool all_finite() const;
  double squared_norm() const;
  void scale(double factor);
  void add_scaled(const ParameterSet& other, double factor);

  bool operator==(const ParameterSet& o) const;

 private:
  std::vector<NamedTensor> tensors_;
};

struct TrainingMeta {
  int epochs_run = 0;
  double best_val_loss = 0.0;
  double wall_time_s = 0.0;
};

struct SequenceModel {
  ModelConfig config;
  ParameterSet params;
  ScalerState scaler;
  TrainingMeta meta;
};

struct ClassWeights {
  double negative = 1.0;
  double positive = 1.0;
};

inline constexpr double kProbEpsilon = 1e-7;

/// Fresh model with seeded fan-in uniform weights and zero biases.
SequenceModel make_model(const ModelConfig& config);

/// Pair-classification probability, clamped to [eps, 1 - eps]. Scales the
/// features with the model's ScalerState unless already_scaled is set.
double forward(const SequenceModel& model, const FeatureMatrix& features, bool already_scaled = false);

/// Pre-sigmoid outputs for a batch of already-scaled L x 6 matrices.
Eigen::VectorXd forward_logits(const ModelConfig& config, const ParameterSet& params,
                               std::span<const FeatureMatrix> batch);

double sigmoid(double z);

/// Weighted binary cross-entropy with p clamped to [eps, 1 - eps].
double loss(double prob, int label, ClassWeights weights = {});

struct Gradient {
  double mean_loss = 0.0;
  ParameterSet grads;
};

/// Reverse-mode gradient of the mean batch loss with respect to every
/// parameter. dropout_rng is only consulted when config.dropout > 0.
Gradient backward(const ModelConfig& config, const ParameterSet& params, std::span<const FeatureMatrix> batch,
                  std::span<const int> labels, ClassWeights weights = {}, Rng* dropout_rng = nullptr);

/// Mean loss without gradients (dropout off).
double batch_loss(const ModelConfig& config, const ParameterSet& params, std::span<const FeatureMatrix> batch,
                  std::span<const int> labels, ClassWeights weights = {});

struct PredictionResult {
  double probability = 0.0;
  int label = 0;
  double threshold_used = 0.0;
};

/// label = 1 iff probability >= threshold.
PredictionResult make_prediction(double probability, double threshold);

PredictionResult predict_pair(const SequenceModel& model, std::span<const TrajectoryPoint> block_a,
                              std::span<const TrajectoryPoint> block_b, double threshold);

}  // namespace flock::seqnet
