#include <cmath>
#include <string>
#include <vector>

#include "encoder.hpp"
#include "flock/error.hpp"

namespace flock::seqnet::detail {

namespace {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

constexpr double kLayerNormEps = 1e-5;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

std::string block_prefix(int b) { return "tf.b" + std::to_string(b) + "."; }

/// Sinusoidal position table, L x d.
MatrixXd position_table(Index L, Index d) {
  MatrixXd pe(L, d);
  for (Index t = 0; t < L; ++t) {
    for (Index i = 0; i < d; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
      pe(t, i) = (i % 2 == 0) ? std::sin(static_cast<double>(t) * rate) : std::cos(static_cast<double>(t) * rate);
    }
  }
  return pe;
}

struct LayerNormCache {
  MatrixXd xhat;
  VectorXd rstd;
};

MatrixXd layer_norm(const MatrixXd& x, const MatrixXd& gamma, const MatrixXd& beta, LayerNormCache& cache) {
  const double d = static_cast<double>(x.cols());
  const VectorXd mean = x.rowwise().sum() / d;
  cache.xhat = x.colwise() - mean;
  const VectorXd var = cache.xhat.array().square().rowwise().sum() / d;
  cache.rstd = (var.array() + kLayerNormEps).rsqrt();
  cache.xhat = cache.xhat.array().colwise() * cache.rstd.array();
  MatrixXd y = cache.xhat.array().rowwise() * gamma.row(0).array();
  y.rowwise() += beta.row(0);
  return y;
}

MatrixXd layer_norm_backward(const MatrixXd& dy, const MatrixXd& gamma, const LayerNormCache& cache,
                             MatrixXd& dgamma, MatrixXd& dbeta) {
  const double d = static_cast<double>(dy.cols());
  dgamma.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbeta.row(0) += dy.colwise().sum();
  const MatrixXd dxhat = dy.array().rowwise() * gamma.row(0).array();
  const VectorXd m1 = dxhat.rowwise().sum() / d;
  const VectorXd m2 = (dxhat.array() * cache.xhat.array()).rowwise().sum() / d;
  MatrixXd dx = dxhat;
  dx.colwise() -= m1;
  dx.array() -= cache.xhat.array().colwise() * m2.array();
  return dx.array().colwise() * cache.rstd.array();
}

MatrixXd gelu(const MatrixXd& x) {
  const auto a = x.array();
  return (0.5 * a * (1.0 + (kGeluC * (a + kGeluA * a.cube())).tanh())).matrix();
}

MatrixXd gelu_grad(const MatrixXd& x) {
  const auto a = x.array();
  const Eigen::ArrayXXd t = (kGeluC * (a + kGeluA * a.cube())).tanh();
  return (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t.square()) * kGeluC * (1.0 + 3.0 * kGeluA * a.square())).matrix();
}

void softmax_rows(MatrixXd& s) {
  const VectorXd mx = s.rowwise().maxCoeff();
  s.colwise() -= mx;
  s = s.array().exp();
  const VectorXd sum = s.rowwise().sum();
  s.array().colwise() /= sum.array();
}

struct BlockCache {
  MatrixXd x_in;  // residual stream entering the block
  LayerNormCache ln1;
  MatrixXd u1, q, k, v;
  std::vector<MatrixXd> attn;  // per head, L x L
  MatrixXd concat;
  LayerNormCache ln2;
  MatrixXd u2, f1, g;
};

struct SampleCache {
  MatrixXd x;  // L x D input
  std::vector<BlockCache> blocks;
  LayerNormCache lnf;
};

class TransformerEncoder final : public Encoder {
 public:
  explicit TransformerEncoder(const ModelConfig& cfg) : cfg_(cfg) {}

  MatrixXd encode(const ParameterSet& p, std::span<const FeatureMatrix> batch, bool keep_cache) override {
    const Index d = cfg_.hidden_size;
    const auto B = static_cast<Index>(batch.size());
    const Index L = batch.front().rows();
    if (cfg_.positional_encoding && pe_.rows() != L) pe_ = position_table(L, d);
    samples_.assign(keep_cache ? batch.size() : 0, {});
    MatrixXd out(d, B);
    SampleCache scratch;
    for (Index s = 0; s < B; ++s) {
      auto& cache = keep_cache ? samples_[static_cast<std::size_t>(s)] : scratch;
      out.col(s) = encode_one(p, batch[static_cast<std::size_t>(s)], cache).transpose();
    }
    check_finite(out, "transformer pooled output");
    return out;
  }

  void backward(const ParameterSet& p, const MatrixXd& d_repr, ParameterSet& grads) override {
    for (std::size_t s = 0; s < samples_.size(); ++s)
      backward_one(p, d_repr.col(static_cast<Index>(s)).transpose(), samples_[s], grads);
  }

 private:
  RowVectorXd encode_one(const ParameterSet& p, const FeatureMatrix& x, SampleCache& c) {
    const Index d = cfg_.hidden_size;
    const Index L = x.rows();
    const Index heads = cfg_.heads;
    const Index dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    c.x = x;
    MatrixXd h = x * p.get("tf.in.w");
    h.rowwise() += p.get("tf.in.b").row(0);
    if (cfg_.positional_encoding) h += pe_;

    c.blocks.resize(static_cast<std::size_t>(cfg_.num_layers));
    for (int b = 0; b < cfg_.num_layers; ++b) {
      const auto pre = block_prefix(b);
      auto& bc = c.blocks[static_cast<std::size_t>(b)];
      bc.x_in = h;
      bc.u1 = layer_norm(h, p.get(pre + "ln1.g"), p.get(pre + "ln1.b"), bc.ln1);
      bc.q = bc.u1 * p.get(pre + "attn.wq");
      bc.q.rowwise() += p.get(pre + "attn.bq").row(0);
      bc.k = bc.u1 * p.get(pre + "attn.wk");
      bc.k.rowwise() += p.get(pre + "attn.bk").row(0);
      bc.v = bc.u1 * p.get(pre + "attn.wv");
      bc.v.rowwise() += p.get(pre + "attn.bv").row(0);
      bc.attn.resize(static_cast<std::size_t>(heads));
      bc.concat.resize(L, d);
      for (Index hd = 0; hd < heads; ++hd) {
        auto& a = bc.attn[static_cast<std::size_t>(hd)];
        a.noalias() = scale * bc.q.middleCols(hd * dk, dk) * bc.k.middleCols(hd * dk, dk).transpose();
        softmax_rows(a);
        bc.concat.middleCols(hd * dk, dk).noalias() = a * bc.v.middleCols(hd * dk, dk);
      }
      MatrixXd attn_out = bc.concat * p.get(pre + "attn.wo");
      attn_out.rowwise() += p.get(pre + "attn.bo").row(0);
      h += attn_out;

      bc.u2 = layer_norm(h, p.get(pre + "ln2.g"), p.get(pre + "ln2.b"), bc.ln2);
      bc.f1 = bc.u2 * p.get(pre + "ff.w1");
      bc.f1.rowwise() += p.get(pre + "ff.b1").row(0);
      bc.g = gelu(bc.f1);
      MatrixXd ff_out = bc.g * p.get(pre + "ff.w2");
      ff_out.rowwise() += p.get(pre + "ff.b2").row(0);
      h += ff_out;
      check_finite(h, "transformer block " + std::to_string(b));
    }
    const MatrixXd final = layer_norm(h, p.get("tf.lnf.g"), p.get("tf.lnf.b"), c.lnf);
    return final.colwise().mean();
  }

  void backward_one(const ParameterSet& p, const RowVectorXd& d_pooled, const SampleCache& c, ParameterSet& g) {
    const Index d = cfg_.hidden_size;
    const Index L = c.x.rows();
    const Index heads = cfg_.heads;
    const Index dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));

    MatrixXd d_final = (d_pooled / static_cast<double>(L)).replicate(L, 1);
    MatrixXd dh = layer_norm_backward(d_final, p.get("tf.lnf.g"), c.lnf, g.get("tf.lnf.g"), g.get("tf.lnf.b"));

    for (int b = cfg_.num_layers - 1; b >= 0; --b) {
      const auto pre = block_prefix(b);
      const auto& bc = c.blocks[static_cast<std::size_t>(b)];

      // feed-forward branch: h_out = h_mid + W2 gelu(W1 LN2(h_mid))
      g.get(pre + "ff.w2").noalias() += bc.g.transpose() * dh;
      g.get(pre + "ff.b2").row(0) += dh.colwise().sum();
      MatrixXd d_f1 = dh * p.get(pre + "ff.w2").transpose();
      d_f1.array() *= gelu_grad(bc.f1).array();
      g.get(pre + "ff.w1").noalias() += bc.u2.transpose() * d_f1;
      g.get(pre + "ff.b1").row(0) += d_f1.colwise().sum();
      const MatrixXd d_u2 = d_f1 * p.get(pre + "ff.w1").transpose();
      dh += layer_norm_backward(d_u2, p.get(pre + "ln2.g"), bc.ln2, g.get(pre + "ln2.g"), g.get(pre + "ln2.b"));

      // attention branch: h_mid = h_in + Wo concat(softmax(QK^T) V)
      g.get(pre + "attn.wo").noalias() += bc.concat.transpose() * dh;
      g.get(pre + "attn.bo").row(0) += dh.colwise().sum();
      const MatrixXd d_concat = dh * p.get(pre + "attn.wo").transpose();
      MatrixXd dq(L, d), dk_m(L, d), dv(L, d);
      for (Index hd = 0; hd < heads; ++hd) {
        const auto& a = bc.attn[static_cast<std::size_t>(hd)];
        const auto d_o = d_concat.middleCols(hd * dk, dk);
        dv.middleCols(hd * dk, dk).noalias() = a.transpose() * d_o;
        MatrixXd d_a = d_o * bc.v.middleCols(hd * dk, dk).transpose();
        const VectorXd row_dot = (d_a.array() * a.array()).rowwise().sum();
        d_a.colwise() -= row_dot;
        d_a.array() *= a.array();
        dq.middleCols(hd * dk, dk).noalias() = scale * d_a * bc.k.middleCols(hd * dk, dk);
        dk_m.middleCols(hd * dk, dk).noalias() = scale * d_a.transpose() * bc.q.middleCols(hd * dk, dk);
      }
      g.get(pre + "attn.wq").noalias() += bc.u1.transpose() * dq;
      g.get(pre + "attn.bq").row(0) += dq.colwise().sum();
      g.get(pre + "attn.wk").noalias() += bc.u1.transpose() * dk_m;
      g.get(pre + "attn.bk").row(0) += dk_m.colwise().sum();
      g.get(pre + "attn.wv").noalias() += bc.u1.transpose() * dv;
      g.get(pre + "attn.bv").row(0) += dv.colwise().sum();
      MatrixXd d_u1 = dq * p.get(pre + "attn.wq").transpose();
      d_u1.noalias() += dk_m * p.get(pre + "attn.wk").transpose();
      d_u1.noalias() += dv * p.get(pre + "attn.wv").transpose();
      dh += layer_norm_backward(d_u1, p.get(pre + "ln1.g"), bc.ln1, g.get(pre + "ln1.g"), g.get(pre + "ln1.b"));
    }
    g.get("tf.in.w").noalias() += c.x.transpose() * dh;
    g.get("tf.in.b").row(0) += dh.colwise().sum();
  }

  ModelConfig cfg_;
  MatrixXd pe_;
  std::vector<SampleCache> samples_;
};

}  // namespace

void init_transformer(const ModelConfig& cfg, ParameterSet& p, Rng& rng) {
  const Index d = cfg.hidden_size;
  const Index ff = static_cast<Index>(cfg.ff_multiplier) * d;
  fill_fan_in(p.add("tf.in.w", cfg.input_dim, d), cfg.input_dim, rng);
  p.add("tf.in.b", 1, d).setZero();
  for (int b = 0; b < cfg.num_layers; ++b) {
    const auto pre = block_prefix(b);
    p.add(pre + "ln1.g", 1, d).setOnes();
    p.add(pre + "ln1.b", 1, d).setZero();
    for (const char* w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) fill_fan_in(p.add(pre + w, d, d), d, rng);
    for (const char* bias : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"}) p.add(pre + bias, 1, d).setZero();
    p.add(pre + "ln2.g", 1, d).setOnes();
    p.add(pre + "ln2.b", 1, d).setZero();
    fill_fan_in(p.add(pre + "ff.w1", d, ff), d, rng);
    p.add(pre + "ff.b1", 1, ff).setZero();
    fill_fan_in(p.add(pre + "ff.w2", ff, d), ff, rng);
    p.add(pre + "ff.b2", 1, d).setZero();
  }
  p.add("tf.lnf.g", 1, d).setOnes();
  p.add("tf.lnf.b", 1, d).setZero();
}

std::unique_ptr<Encoder> make_transformer_encoder(const ModelConfig& config) {
  return std::make_unique<TransformerEncoder>(config);
}

}  // namespace flock::seqnet::detail
