#include "flock/seqnet/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "encoder.hpp"
#include "flock/error.hpp"

namespace flock::seqnet {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(Arch a) {
  switch (a) {
    case Arch::rnn: return "rnn";
    case Arch::lstm: return "lstm";
    case Arch::transformer: return "transformer";
  }
  return "?";
}

Arch arch_from(std::string_view s) {
  if (s == "rnn") return Arch::rnn;
  if (s == "lstm") return Arch::lstm;
  if (s == "transformer") return Arch::transformer;
  throw InvalidConfig("unknown architecture '" + std::string(s) + "'");
}

void ModelConfig::validate() const {
  if (input_dim != kFeatureCount)
    throw InvalidConfig("input_dim must be " + std::to_string(kFeatureCount) + ", got " + std::to_string(input_dim));
  if (hidden_size < 1) throw InvalidConfig("hidden_size must be positive");
  if (num_layers < 1) throw InvalidConfig("num_layers must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw InvalidConfig("dropout must lie in [0, 1)");
  if (sequence_length < 1) throw InvalidConfig("sequence_length must be positive");
  if (arch == Arch::transformer) {
    if (heads < 1 || hidden_size % heads != 0)
      throw InvalidConfig("hidden_size " + std::to_string(hidden_size) + " is not divisible by heads " +
                          std::to_string(heads));
    if (ff_multiplier < 1) throw InvalidConfig("ff_multiplier must be positive");
  }
}

// ---------------------------------------------------------------------------

MatrixXd& ParameterSet::add(std::string name, Index rows, Index cols) {
  if (contains(name)) throw InvalidConfig("duplicate parameter " + name);
  tensors_.push_back({std::move(name), MatrixXd::Zero(rows, cols)});
  return tensors_.back().value;
}

MatrixXd& ParameterSet::get(std::string_view name) {
  for (auto& t : tensors_)
    if (t.name == name) return t.value;
  throw InvalidConfig("no parameter named " + std::string(name));
}

const MatrixXd& ParameterSet::get(std::string_view name) const { return const_cast<ParameterSet*>(this)->get(name); }

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(tensors_.begin(), tensors_.end(), [&](const NamedTensor& t) { return t.name == name; });
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  out.tensors_.reserve(tensors_.size());
  for (const auto& t : tensors_) out.tensors_.push_back({t.name, MatrixXd::Zero(t.value.rows(), t.value.cols())});
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += static_cast<std::size_t>(t.value.size());
  return n;
}

bool ParameterSet::all_finite() const {
  return std::all_of(tensors_.begin(), tensors_.end(), [](const NamedTensor& t) { return t.value.allFinite(); });
}

double ParameterSet::squared_norm() const {
  double s = 0.0;
  for (const auto& t : tensors_) s += t.value.squaredNorm();
  return s;
}

void ParameterSet::scale(double factor) {
  for (auto& t : tensors_) t.value *= factor;
}

void ParameterSet::add_scaled(const ParameterSet& other, double factor) {
  for (std::size_t i = 0; i < tensors_.size(); ++i) tensors_[i].value += factor * other.tensors_[i].value;
}

bool ParameterSet::operator==(const ParameterSet& o) const {
  if (tensors_.size() != o.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& a = tensors_[i];
    const auto& b = o.tensors_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
    if (!std::equal(a.value.data(), a.value.data() + a.value.size(), b.value.data())) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

namespace detail {

void fill_fan_in(MatrixXd& m, Index fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  // column-major fill order is part of the seeded layout
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
}

void check_finite(const MatrixXd& m, const std::string& layer) {
  if (!m.allFinite()) throw NumericalFailure(layer, "non-finite activation");
}

MatrixXd time_major(std::span<const FeatureMatrix> batch) {
  const auto B = static_cast<Index>(batch.size());
  const Index L = batch.front().rows();
  const Index D = batch.front().cols();
  MatrixXd out(D, L * B);
  for (Index b = 0; b < B; ++b) {
    const auto& x = batch[static_cast<std::size_t>(b)];
    for (Index t = 0; t < L; ++t) out.col(t * B + b) = x.row(t).transpose();
  }
  return out;
}

std::unique_ptr<Encoder> make_encoder(const ModelConfig& config) {
  switch (config.arch) {
    case Arch::rnn: return make_rnn_encoder(config);
    case Arch::lstm: return make_lstm_encoder(config);
    case Arch::transformer: return make_transformer_encoder(config);
  }
  throw InvalidConfig("unknown architecture");
}

}  // namespace detail

namespace {

void check_batch(const ModelConfig& config, std::span<const FeatureMatrix> batch) {
  if (batch.empty()) throw InvalidInput("empty batch");
  const Index L = batch.front().rows();
  if (L < 1) throw InvalidInput("sequence length must be at least 1");
  for (const auto& x : batch) {
    if (x.rows() != L || x.cols() != config.input_dim)
      throw InvalidInput("batch entries must all be " + std::to_string(L) + "x" + std::to_string(config.input_dim));
    if (!x.allFinite()) throw InvalidInput("non-finite feature value");
  }
}

VectorXd head_logits(const ParameterSet& p, const MatrixXd& repr) {
  VectorXd z = (p.get("head.w") * repr).transpose();
  z.array() += p.get("head.b")(0, 0);
  return z;
}

double clamp_prob(double p) { return std::clamp(p, kProbEpsilon, 1.0 - kProbEpsilon); }

}  // namespace

SequenceModel make_model(const ModelConfig& config) {
  config.validate();
  SequenceModel m;
  m.config = config;
  Rng rng(config.seed);
  if (config.arch == Arch::transformer)
    detail::init_transformer(config, m.params, rng);
  else
    detail::init_recurrent(config, m.params, rng);
  detail::fill_fan_in(m.params.add("head.w", 1, config.hidden_size), config.hidden_size, rng);
  m.params.add("head.b", 1, 1).setZero();
  return m;
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double loss(double prob, int label, ClassWeights weights) {
  if (label != 0 && label != 1) throw InvalidInput("label must be 0 or 1");
  const double p = clamp_prob(prob);
  return label == 1 ? -weights.positive * std::log(p) : -weights.negative * std::log(1.0 - p);
}

VectorXd forward_logits(const ModelConfig& config, const ParameterSet& params, std::span<const FeatureMatrix> batch) {
  check_batch(config, batch);
  auto enc = detail::make_encoder(config);
  const MatrixXd repr = enc->encode(params, batch, false);
  VectorXd z = head_logits(params, repr);
  if (!z.allFinite()) throw NumericalFailure("head", "non-finite logit");
  return z;
}

double forward(const SequenceModel& model, const FeatureMatrix& features, bool already_scaled) {
  if (!features.allFinite()) throw InvalidInput("non-finite feature value");
  if (already_scaled) {
    const VectorXd z = forward_logits(model.config, model.params, std::span(&features, 1));
    return clamp_prob(sigmoid(z(0)));
  }
  const FeatureMatrix scaled = [&] {
    FeatureMatrix m = features;
    apply_scalers_inplace(model.scaler, m);
    return m;
  }();
  const VectorXd z = forward_logits(model.config, model.params, std::span(&scaled, 1));
  return clamp_prob(sigmoid(z(0)));
}

Gradient backward(const ModelConfig& config, const ParameterSet& params, std::span<const FeatureMatrix> batch,
                  std::span<const int> labels, ClassWeights weights, Rng* dropout_rng) {
  check_batch(config, batch);
  if (labels.size() != batch.size()) throw InvalidInput("labels and batch differ in size");
  const auto B = static_cast<Index>(batch.size());

  auto enc = detail::make_encoder(config);
  MatrixXd repr = enc->encode(params, batch, true);

  // inverted dropout on the pooled representation
  MatrixXd mask;
  if (config.dropout > 0.0 && dropout_rng != nullptr) {
    const double keep = 1.0 - config.dropout;
    mask.resize(repr.rows(), repr.cols());
    for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
    repr.array() *= mask.array();
  }

  const VectorXd z = head_logits(params, repr);
  if (!z.allFinite()) throw NumericalFailure("head", "non-finite logit");

  Gradient out;
  out.grads = params.zeros_like();
  VectorXd dz(B);
  double total = 0.0;
  for (Index b = 0; b < B; ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    const double p = sigmoid(z(b));
    total += loss(p, y, weights);
    dz(b) = (y == 1 ? -weights.positive * (1.0 - p) : weights.negative * p) / static_cast<double>(B);
  }
  out.mean_loss = total / static_cast<double>(B);

  out.grads.get("head.w").noalias() += dz.transpose() * repr.transpose();
  out.grads.get("head.b")(0, 0) += dz.sum();
  MatrixXd d_repr = params.get("head.w").transpose() * dz.transpose();
  if (mask.size() > 0) d_repr.array() *= mask.array();
  enc->backward(params, d_repr, out.grads);

  if (!out.grads.all_finite()) throw NumericalFailure("backward", "non-finite gradient");
  return out;
}

double batch_loss(const ModelConfig& config, const ParameterSet& params, std::span<const FeatureMatrix> batch,
                  std::span<const int> labels, ClassWeights weights) {
  if (labels.size() != batch.size()) throw InvalidInput("labels and batch differ in size");
  const VectorXd z = forward_logits(config, params, batch);
  double total = 0.0;
  for (Index b = 0; b < z.size(); ++b) total += loss(sigmoid(z(b)), labels[static_cast<std::size_t>(b)], weights);
  return total / static_cast<double>(z.size());
}

PredictionResult make_prediction(double probability, double threshold) {
  return {probability, probability >= threshold ? 1 : 0, threshold};
}

PredictionResult predict_pair(const SequenceModel& model, std::span<const TrajectoryPoint> block_a,
                              std::span<const TrajectoryPoint> block_b, double threshold) {
  const FeatureMatrix f = featurize_pair(block_a, block_b, model.config.dtw_mode);
  return make_prediction(forward(model, f), threshold);
}

}  // namespace flock::seqnet
