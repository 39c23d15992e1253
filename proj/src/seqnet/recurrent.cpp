#include <cmath>
#include <string>
#include <vector>

#include "encoder.hpp"
#include "flock/error.hpp"

namespace flock::seqnet::detail {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;

std::string layer_prefix(Arch arch, int layer) {
  return (arch == Arch::lstm ? "lstm.l" : "rnn.l") + std::to_string(layer) + ".";
}

inline MatrixXd sigmoid_of(const MatrixXd& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

// Elman cell: h_t = tanh(W_x x_t + W_h h_{t-1} + b)
class RnnEncoder final : public Encoder {
 public:
  explicit RnnEncoder(const ModelConfig& cfg) : cfg_(cfg) {}

  MatrixXd encode(const ParameterSet& p, std::span<const FeatureMatrix> batch, bool keep_cache) override {
    B_ = static_cast<Index>(batch.size());
    L_ = batch.front().rows();
    const Index H = cfg_.hidden_size;
    layers_.assign(static_cast<std::size_t>(cfg_.num_layers), {});
    MatrixXd input = time_major(batch);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      const auto pre = layer_prefix(Arch::rnn, l);
      const auto& Wx = p.get(pre + "w_x");
      const auto& Wh = p.get(pre + "w_h");
      const auto& b = p.get(pre + "b");
      MatrixXd h_all = Wx * input;
      h_all.colwise() += b.col(0);
      MatrixXd h_prev = MatrixXd::Zero(H, B_);
      for (Index t = 0; t < L_; ++t) {
        auto block = h_all.middleCols(t * B_, B_);
        block.noalias() += Wh * h_prev;
        block = block.array().tanh();
        h_prev = block;
      }
      check_finite(h_all, "rnn layer " + std::to_string(l));
      auto& cache = layers_[static_cast<std::size_t>(l)];
      if (keep_cache) cache.input = input;
      input = std::move(h_all);
      if (keep_cache) cache.h = input;
    }
    return input.middleCols((L_ - 1) * B_, B_);
  }

  void backward(const ParameterSet& p, const MatrixXd& d_repr, ParameterSet& grads) override {
    const Index H = cfg_.hidden_size;
    MatrixXd d_ext = MatrixXd::Zero(H, L_ * B_);
    d_ext.middleCols((L_ - 1) * B_, B_) = d_repr;
    for (int l = cfg_.num_layers - 1; l >= 0; --l) {
      const auto& cache = layers_[static_cast<std::size_t>(l)];
      const auto pre = layer_prefix(Arch::rnn, l);
      const auto& Wx = p.get(pre + "w_x");
      const auto& Wh = p.get(pre + "w_h");
      MatrixXd d_pre(H, L_ * B_);
      MatrixXd dh = MatrixXd::Zero(H, B_);
      for (Index t = L_ - 1; t >= 0; --t) {
        dh += d_ext.middleCols(t * B_, B_);
        const auto h = cache.h.middleCols(t * B_, B_);
        auto dp = d_pre.middleCols(t * B_, B_);
        dp = dh.array() * (1.0 - h.array().square());
        dh.noalias() = Wh.transpose() * dp;
      }
      if (L_ > 1)
        grads.get(pre + "w_h").noalias() +=
            d_pre.rightCols((L_ - 1) * B_) * cache.h.leftCols((L_ - 1) * B_).transpose();
      grads.get(pre + "b") += d_pre.rowwise().sum();
      grads.get(pre + "w_x").noalias() += d_pre * cache.input.transpose();
      if (l > 0) d_ext.noalias() = Wx.transpose() * d_pre;
    }
  }

 private:
  struct LayerCache {
    MatrixXd input;  // D x LB
    MatrixXd h;      // H x LB
  };
  ModelConfig cfg_;
  Index B_ = 0, L_ = 0;
  std::vector<LayerCache> layers_;
};

// LSTM cell, gate rows ordered [input, forget, candidate, output].
class LstmEncoder final : public Encoder {
 public:
  explicit LstmEncoder(const ModelConfig& cfg) : cfg_(cfg) {}

  MatrixXd encode(const ParameterSet& p, std::span<const FeatureMatrix> batch, bool keep_cache) override {
    B_ = static_cast<Index>(batch.size());
    L_ = batch.front().rows();
    const Index H = cfg_.hidden_size;
    layers_.assign(static_cast<std::size_t>(cfg_.num_layers), {});
    MatrixXd input = time_major(batch);
    for (int l = 0; l < cfg_.num_layers; ++l) {
      const auto pre = layer_prefix(Arch::lstm, l);
      const auto& Wx = p.get(pre + "w_x");
      const auto& Wh = p.get(pre + "w_h");
      const auto& b = p.get(pre + "b");
      MatrixXd gates = Wx * input;  // 4H x LB, activated in place
      gates.colwise() += b.col(0);
      MatrixXd c_all(H, L_ * B_), tc_all(H, L_ * B_), h_all(H, L_ * B_);
      MatrixXd h_prev = MatrixXd::Zero(H, B_), c_prev = MatrixXd::Zero(H, B_);
      for (Index t = 0; t < L_; ++t) {
        auto z = gates.middleCols(t * B_, B_);
        z.noalias() += Wh * h_prev;
        z.topRows(2 * H) = sigmoid_of(z.topRows(2 * H));
        z.middleRows(2 * H, H) = z.middleRows(2 * H, H).array().tanh();
        z.bottomRows(H) = sigmoid_of(z.bottomRows(H));
        auto c = c_all.middleCols(t * B_, B_);
        c = z.middleRows(H, H).cwiseProduct(c_prev) + z.topRows(H).cwiseProduct(z.middleRows(2 * H, H));
        auto tc = tc_all.middleCols(t * B_, B_);
        tc = c.array().tanh();
        auto h = h_all.middleCols(t * B_, B_);
        h = z.bottomRows(H).cwiseProduct(tc);
        h_prev = h;
        c_prev = c;
      }
      check_finite(h_all, "lstm layer " + std::to_string(l));
      auto& cache = layers_[static_cast<std::size_t>(l)];
      if (keep_cache) {
        cache.input = std::move(input);
        cache.gates = std::move(gates);
        cache.c = std::move(c_all);
        cache.tc = std::move(tc_all);
        cache.h = h_all;
      }
      input = std::move(h_all);
    }
    return input.middleCols((L_ - 1) * B_, B_);
  }

  void backward(const ParameterSet& p, const MatrixXd& d_repr, ParameterSet& grads) override {
    const Index H = cfg_.hidden_size;
    MatrixXd d_ext = MatrixXd::Zero(H, L_ * B_);
    d_ext.middleCols((L_ - 1) * B_, B_) = d_repr;
    for (int l = cfg_.num_layers - 1; l >= 0; --l) {
      const auto& cache = layers_[static_cast<std::size_t>(l)];
      const auto pre = layer_prefix(Arch::lstm, l);
      const auto& Wx = p.get(pre + "w_x");
      const auto& Wh = p.get(pre + "w_h");
      MatrixXd dz_all(4 * H, L_ * B_);
      MatrixXd dh = MatrixXd::Zero(H, B_), dc = MatrixXd::Zero(H, B_);
      for (Index t = L_ - 1; t >= 0; --t) {
        dh += d_ext.middleCols(t * B_, B_);
        const auto g = cache.gates.middleCols(t * B_, B_);
        const auto ig = g.topRows(H).array();
        const auto fg = g.middleRows(H, H).array();
        const auto cg = g.middleRows(2 * H, H).array();
        const auto og = g.bottomRows(H).array();
        const auto tc = cache.tc.middleCols(t * B_, B_).array();

        dc.array() += dh.array() * og * (1.0 - tc.square());
        auto dz = dz_all.middleCols(t * B_, B_);
        dz.topRows(H) = (dc.array() * cg * ig * (1.0 - ig)).matrix();
        if (t > 0) {
          dz.middleRows(H, H) =
              (dc.array() * cache.c.middleCols((t - 1) * B_, B_).array() * fg * (1.0 - fg)).matrix();
        } else {
          dz.middleRows(H, H).setZero();
        }
        dz.middleRows(2 * H, H) = (dc.array() * ig * (1.0 - cg.square())).matrix();
        dz.bottomRows(H) = (dh.array() * tc * og * (1.0 - og)).matrix();
        dc.array() *= fg;
        dh.noalias() = Wh.transpose() * dz;
      }
      if (L_ > 1)
        grads.get(pre + "w_h").noalias() +=
            dz_all.rightCols((L_ - 1) * B_) * cache.h.leftCols((L_ - 1) * B_).transpose();
      grads.get(pre + "b") += dz_all.rowwise().sum();
      grads.get(pre + "w_x").noalias() += dz_all * cache.input.transpose();
      if (l > 0) d_ext.noalias() = Wx.transpose() * dz_all;
    }
  }

 private:
  struct LayerCache {
    MatrixXd input, gates, c, tc, h;
  };
  ModelConfig cfg_;
  Index B_ = 0, L_ = 0;
  std::vector<LayerCache> layers_;
};

}  // namespace

void init_recurrent(const ModelConfig& cfg, ParameterSet& p, Rng& rng) {
  const Index H = cfg.hidden_size;
  const Index gates = cfg.arch == Arch::lstm ? 4 : 1;
  for (int l = 0; l < cfg.num_layers; ++l) {
    const auto pre = layer_prefix(cfg.arch, l);
    const Index in = l == 0 ? cfg.input_dim : H;
    // every recurrent weight uses the hidden size as its fan-in
    fill_fan_in(p.add(pre + "w_x", gates * H, in), H, rng);
    fill_fan_in(p.add(pre + "w_h", gates * H, H), H, rng);
    p.add(pre + "b", gates * H, 1).setZero();
  }
}

std::unique_ptr<Encoder> make_rnn_encoder(const ModelConfig& config) { return std::make_unique<RnnEncoder>(config); }
std::unique_ptr<Encoder> make_lstm_encoder(const ModelConfig& config) { return std::make_unique<LstmEncoder>(config); }

}  // namespace flock::seqnet::detail
