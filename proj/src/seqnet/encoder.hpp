#pragma once

#include <memory>
#include <span>
#include <string>

#include <Eigen/Core>

#include "flock/seqnet/model.hpp"

namespace flock::seqnet::detail {

/// Maps a batch of L x D sequences to an H x B representation (one column
/// per sample). Intermediates are kept on the instance for backward(), so
/// an encoder object is single-use per batch and never shared.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual Eigen::MatrixXd encode(const ParameterSet& p, std::span<const FeatureMatrix> batch, bool keep_cache) = 0;
  virtual void backward(const ParameterSet& p, const Eigen::MatrixXd& d_repr, ParameterSet& grads) = 0;
};

std::unique_ptr<Encoder> make_encoder(const ModelConfig& config);

void init_recurrent(const ModelConfig& config, ParameterSet& p, Rng& rng);
void init_transformer(const ModelConfig& config, ParameterSet& p, Rng& rng);

std::unique_ptr<Encoder> make_rnn_encoder(const ModelConfig& config);
std::unique_ptr<Encoder> make_lstm_encoder(const ModelConfig& config);
std::unique_ptr<Encoder> make_transformer_encoder(const ModelConfig& config);

/// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
void fill_fan_in(Eigen::MatrixXd& m, Eigen::Index fan_in, Rng& rng);

/// Throws NumericalFailure naming the layer when m has NaN/Inf entries.
void check_finite(const Eigen::MatrixXd& m, const std::string& layer);

/// Stacks the batch into a D x (L*B) matrix, column t*B + b holding step t
/// of sample b.
Eigen::MatrixXd time_major(std::span<const FeatureMatrix> batch);

}  // namespace flock::seqnet::detail
