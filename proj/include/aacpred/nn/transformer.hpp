#ifndef AACPRED_NN_TRANSFORMER_HPP
#define AACPRED_NN_TRANSFORMER_HPP

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "aacpred/encoder.hpp"
#include "aacpred/error.hpp"
#include "aacpred/rng.hpp"

namespace aacpred::nn {

/// Shape of a BERT-style masked-LM encoder.
struct EncoderConfig {
  int vocab_size = 0;
  int hidden = 64;
  int layers = 2;
  int heads = 4;
  int intermediate = 256;
  int max_positions = 16;
  int type_vocab = 2;
  float ln_eps = 1e-12f;

  nlohmann::json to_json() const {
    return {{"vocab_size", vocab_size}, {"hidden", hidden},           {"layers", layers},
            {"heads", heads},           {"intermediate", intermediate}, {"max_positions", max_positions},
            {"type_vocab", type_vocab}, {"ln_eps", ln_eps}};
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.hidden = j.at("hidden").get<int>();
    c.layers = j.at("layers").get<int>();
    c.heads = j.at("heads").get<int>();
    c.intermediate = j.at("intermediate").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.type_vocab = j.value("type_vocab", 2);
    c.ln_eps = j.value("ln_eps", 1e-12f);
    c.validate();
    return c;
  }

  void validate() const {
    if (vocab_size <= 0 || hidden <= 0 || layers <= 0 || heads <= 0 || intermediate <= 0 || max_positions <= 2 ||
        type_vocab <= 0 || hidden % heads != 0)
      throw Error(Errc::invalid_config, "invalid encoder shape " + to_json().dump());
  }
};

struct Param {
  std::string name;
  RowMat value;
  RowMat grad;
  bool decay = true;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value = RowMat::Zero(rows, cols);
    grad = RowMat::Zero(rows, cols);
  }
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// A batch of equal-length sequences, flattened row-major (batch x length).
struct Batch {
  int batch = 0;
  int length = 0;
  std::vector<std::int32_t> ids;
  std::vector<std::uint8_t> attend;

  int rows() const { return batch * length; }
};

namespace detail {

inline float gelu(float x) { return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752f)); }

inline float gelu_grad(float x) {
  const float cdf = 0.5f * (1.0f + std::erf(x * 0.70710678118654752f));
  const float pdf = 0.39894228040143268f * std::exp(-0.5f * x * x);
  return cdf + x * pdf;
}

inline void add_bias(RowMat& m, const RowMat& bias) { m.rowwise() += bias.row(0); }

struct NormCache {
  RowMat xhat;
  Eigen::VectorXf rstd;
};

inline RowMat layer_norm(const RowMat& x, const Param& gamma, const Param& beta, float eps, NormCache* cache) {
  const Eigen::Index n = x.rows();
  const Eigen::Index h = x.cols();
  RowMat xhat(n, h);
  Eigen::VectorXf rstd(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const float mean = x.row(r).mean();
    const float var = (x.row(r).array() - mean).square().mean();
    rstd(r) = 1.0f / std::sqrt(var + eps);
    xhat.row(r) = (x.row(r).array() - mean) * rstd(r);
  }
  RowMat y = (xhat.array().rowwise() * gamma.value.row(0).array()).matrix();
  add_bias(y, beta.value);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

inline RowMat layer_norm_backward(const RowMat& dy, const NormCache& c, Param& gamma, Param& beta) {
  gamma.grad.row(0) += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  beta.grad.row(0) += dy.colwise().sum();
  RowMat dxhat = (dy.array().rowwise() * gamma.value.row(0).array()).matrix();
  RowMat dx(dy.rows(), dy.cols());
  const float inv_h = 1.0f / static_cast<float>(dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const float m1 = dxhat.row(r).sum() * inv_h;
    const float m2 = dxhat.row(r).dot(c.xhat.row(r)) * inv_h;
    dx.row(r) = c.rstd(r) * (dxhat.row(r).array() - m1 - c.xhat.row(r).array() * m2);
  }
  return dx;
}

/// Mean softmax cross-entropy of `targets` (one per logits row). When `grad`
/// is given it receives d(loss)/d(logits).
inline double softmax_cross_entropy(const RowMat& logits, const std::vector<std::int32_t>& targets,
                                    RowMat* grad = nullptr) {
  const Eigen::Index m = logits.rows();
  double loss = 0.0;
  if (grad) grad->resize(m, logits.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const float mx = logits.row(i).maxCoeff();
    Eigen::ArrayXd e = (logits.row(i).array() - mx).cast<double>().exp().transpose();
    const double z = e.sum();
    const auto t = targets[static_cast<std::size_t>(i)];
    loss += std::log(z) - static_cast<double>(logits(i, t) - mx);
    if (grad) {
      grad->row(i) = (e / z).cast<float>().matrix().transpose();
      (*grad)(i, t) -= 1.0f;
    }
  }
  if (m == 0) return 0.0;
  if (grad) *grad /= static_cast<float>(m);
  return loss / static_cast<double>(m);
}

}  // namespace detail

// BERT-architecture encoder with a tied masked-LM head:
//   embeddings (word + position + type) -> LayerNorm
//   N x [self-attention -> add & norm -> GELU feed-forward -> add & norm]
//   head: dense -> GELU -> LayerNorm -> word embeddings^T + bias
// Linear weights are stored (in x out) so a layer computes x * W + b.
class Transformer {
 public:
  struct Layer {
    Param q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    Param ln1_g, ln1_b;
    Param ff1_w, ff1_b, ff2_w, ff2_b;
    Param ln2_g, ln2_b;
  };

  Transformer() = default;

  explicit Transformer(const EncoderConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    const int h = cfg.hidden;
    auto setup = [](Param& p, std::string name, Eigen::Index r, Eigen::Index c, bool decay) {
      p.name = std::move(name);
      p.resize(r, c);
      p.decay = decay;
    };
    setup(word_, "embeddings.word", cfg.vocab_size, h, true);
    setup(position_, "embeddings.position", cfg.max_positions, h, true);
    setup(type_, "embeddings.token_type", cfg.type_vocab, h, true);
    setup(emb_ln_g_, "embeddings.ln.gamma", 1, h, false);
    setup(emb_ln_b_, "embeddings.ln.beta", 1, h, false);
    layers_.resize(static_cast<std::size_t>(cfg.layers));
    for (int i = 0; i < cfg.layers; ++i) {
      auto& L = layers_[static_cast<std::size_t>(i)];
      const std::string p = "layer." + std::to_string(i) + ".";
      setup(L.q_w, p + "attn.q.w", h, h, true);
      setup(L.q_b, p + "attn.q.b", 1, h, false);
      setup(L.k_w, p + "attn.k.w", h, h, true);
      setup(L.k_b, p + "attn.k.b", 1, h, false);
      setup(L.v_w, p + "attn.v.w", h, h, true);
      setup(L.v_b, p + "attn.v.b", 1, h, false);
      setup(L.o_w, p + "attn.o.w", h, h, true);
      setup(L.o_b, p + "attn.o.b", 1, h, false);
      setup(L.ln1_g, p + "attn.ln.gamma", 1, h, false);
      setup(L.ln1_b, p + "attn.ln.beta", 1, h, false);
      setup(L.ff1_w, p + "ffn.in.w", h, cfg.intermediate, true);
      setup(L.ff1_b, p + "ffn.in.b", 1, cfg.intermediate, false);
      setup(L.ff2_w, p + "ffn.out.w", cfg.intermediate, h, true);
      setup(L.ff2_b, p + "ffn.out.b", 1, h, false);
      setup(L.ln2_g, p + "ffn.ln.gamma", 1, h, false);
      setup(L.ln2_b, p + "ffn.ln.beta", 1, h, false);
    }
    setup(head_w_, "head.transform.w", h, h, true);
    setup(head_b_, "head.transform.b", 1, h, false);
    setup(head_ln_g_, "head.ln.gamma", 1, h, false);
    setup(head_ln_b_, "head.ln.beta", 1, h, false);
    setup(out_bias_, "head.bias", 1, cfg.vocab_size, false);
    for (auto* p : params())
      if (p->name.find("gamma") != std::string::npos) p->value.setOnes();
  }

  /// N(0, stddev^2) weights; biases zero, norms identity.
  void init_random(Rng& rng, float stddev = 0.02f) {
    for (auto* p : params()) {
      if (p->name.find("gamma") != std::string::npos || p->name.find("beta") != std::string::npos) continue;
      if (p->value.rows() == 1) continue;  // biases
      for (Eigen::Index i = 0; i < p->value.size(); ++i)
        p->value.data()[i] = static_cast<float>(standard_normal(rng)) * stddev;
    }
  }

  const EncoderConfig& config() const { return cfg_; }
  int hidden() const { return cfg_.hidden; }

  std::vector<Param*> params() {
    std::vector<Param*> out = {&word_, &position_, &type_, &emb_ln_g_, &emb_ln_b_};
    for (auto& L : layers_) {
      for (Param* p : {&L.q_w, &L.q_b, &L.k_w, &L.k_b, &L.v_w, &L.v_b, &L.o_w, &L.o_b, &L.ln1_g, &L.ln1_b,
                       &L.ff1_w, &L.ff1_b, &L.ff2_w, &L.ff2_b, &L.ln2_g, &L.ln2_b})
        out.push_back(p);
    }
    for (Param* p : {&head_w_, &head_b_, &head_ln_g_, &head_ln_b_, &out_bias_}) out.push_back(p);
    return out;
  }

  std::vector<const Param*> params() const {
    auto mut = const_cast<Transformer*>(this)->params();
    return {mut.begin(), mut.end()};
  }

  Param* find_param(const std::string& name) {
    for (auto* p : params())
      if (p->name == name) return p;
    return nullptr;
  }

  Param& word_embeddings() { return word_; }
  const Param& word_embeddings() const { return word_; }
  Param& output_bias() { return out_bias_; }
  const Param& output_bias() const { return out_bias_; }

  void zero_grad() {
    for (auto* p : params()) p->zero_grad();
  }

  /// Every layer's hidden states, embedding output first; rows follow the batch layout.
  std::vector<RowMat> hidden_states(const Batch& b) const {
    std::vector<RowMat> out;
    forward(b, nullptr, &out);
    return out;
  }

  /// Masked-LM logits at the given flat rows.
  RowMat logits(const Batch& b, const std::vector<int>& rows) const {
    RowMat last = forward(b, nullptr, nullptr);
    RowMat sel(static_cast<Eigen::Index>(rows.size()), cfg_.hidden);
    for (std::size_t i = 0; i < rows.size(); ++i) sel.row(static_cast<Eigen::Index>(i)) = last.row(rows[i]);
    return head_forward(sel, nullptr);
  }

  // Mean cross-entropy of `targets` at `rows`; accumulates parameter gradients
  // of that mean times `grad_scale`.
  double loss_and_backward(const Batch& b, const std::vector<int>& rows, const std::vector<std::int32_t>& targets,
                           double grad_scale = 1.0) {
    if (rows.empty() || rows.size() != targets.size())
      throw Error(Errc::invalid_config, "loss needs matching, non-empty rows and targets");
    Cache cache;
    RowMat last = forward(b, &cache, nullptr);
    const auto m = static_cast<Eigen::Index>(rows.size());
    RowMat sel(m, cfg_.hidden);
    for (Eigen::Index i = 0; i < m; ++i) sel.row(i) = last.row(rows[static_cast<std::size_t>(i)]);
    HeadCache hc;
    RowMat logit = head_forward(sel, &hc);

    RowMat dlogits;
    const double loss = detail::softmax_cross_entropy(logit, targets, &dlogits);
    if (grad_scale != 1.0) dlogits *= static_cast<float>(grad_scale);

    RowMat dsel = head_backward(dlogits, hc);
    RowMat dlast = RowMat::Zero(last.rows(), last.cols());
    for (Eigen::Index i = 0; i < m; ++i) dlast.row(rows[static_cast<std::size_t>(i)]) += dsel.row(i);
    backward(b, cache, dlast);
    return loss;
  }

 private:
  struct LayerCache {
    RowMat x, q, k, v, ctx, x1, f, g;
    std::vector<RowMat> probs;
    detail::NormCache ln1, ln2;
  };
  struct Cache {
    detail::NormCache emb_ln;
    std::vector<LayerCache> layers;
  };
  struct HeadCache {
    RowMat in, t, u, z;
    detail::NormCache ln;
  };

  void check_batch(const Batch& b) const {
    if (b.length > cfg_.max_positions)
      throw Error(Errc::invalid_config, "sequence length " + std::to_string(b.length) + " exceeds " +
                                            std::to_string(cfg_.max_positions) + " positions");
    if (static_cast<int>(b.ids.size()) != b.rows() || static_cast<int>(b.attend.size()) != b.rows())
      throw Error(Errc::invalid_config, "batch arrays do not match batch x length");
    for (auto id : b.ids)
      if (id < 0 || id >= cfg_.vocab_size) throw Error(Errc::unknown_token, "token index out of range");
  }

  RowMat forward(const Batch& b, Cache* cache, std::vector<RowMat>* states) const {
    check_batch(b);
    const int n = b.rows();
    const int h = cfg_.hidden;
    RowMat emb(n, h);
    for (int r = 0; r < n; ++r)
      emb.row(r) = word_.value.row(b.ids[static_cast<std::size_t>(r)]) + position_.value.row(r % b.length) +
                   type_.value.row(0);
    RowMat x = detail::layer_norm(emb, emb_ln_g_, emb_ln_b_, cfg_.ln_eps, cache ? &cache->emb_ln : nullptr);
    if (states) states->push_back(x);
    if (cache) cache->layers.resize(layers_.size());
    for (std::size_t li = 0; li < layers_.size(); ++li) {
      x = layer_forward(layers_[li], x, b, cache ? &cache->layers[li] : nullptr);
      if (states) states->push_back(x);
    }
    return x;
  }

  RowMat layer_forward(const Layer& L, const RowMat& x, const Batch& b, LayerCache* c) const {
    const int heads = cfg_.heads;
    const int d = cfg_.hidden / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    RowMat q = x * L.q_w.value;
    detail::add_bias(q, L.q_b.value);
    RowMat k = x * L.k_w.value;
    detail::add_bias(k, L.k_b.value);
    RowMat v = x * L.v_w.value;
    detail::add_bias(v, L.v_b.value);
    RowMat ctx(x.rows(), x.cols());
    if (c) c->probs.resize(static_cast<std::size_t>(b.batch * heads));
    const int len = b.length;
    for (int s = 0; s < b.batch; ++s) {
      for (int hd = 0; hd < heads; ++hd) {
        RowMat scores = (q.block(s * len, hd * d, len, d) * k.block(s * len, hd * d, len, d).transpose()) * scale;
        for (int j = 0; j < len; ++j)
          if (!b.attend[static_cast<std::size_t>(s * len + j)]) scores.col(j).setConstant(-1e30f);
        for (int i = 0; i < len; ++i) {
          const float mx = scores.row(i).maxCoeff();
          scores.row(i) = (scores.row(i).array() - mx).exp().matrix();
          scores.row(i) /= scores.row(i).sum();
        }
        ctx.block(s * len, hd * d, len, d) = scores * v.block(s * len, hd * d, len, d);
        if (c) c->probs[static_cast<std::size_t>(s * heads + hd)] = std::move(scores);
      }
    }
    RowMat attn = ctx * L.o_w.value;
    detail::add_bias(attn, L.o_b.value);
    RowMat x1 = detail::layer_norm(x + attn, L.ln1_g, L.ln1_b, cfg_.ln_eps, c ? &c->ln1 : nullptr);
    RowMat f = x1 * L.ff1_w.value;
    detail::add_bias(f, L.ff1_b.value);
    RowMat g = f.unaryExpr([](float t) { return detail::gelu(t); });
    RowMat o = g * L.ff2_w.value;
    detail::add_bias(o, L.ff2_b.value);
    RowMat out = detail::layer_norm(x1 + o, L.ln2_g, L.ln2_b, cfg_.ln_eps, c ? &c->ln2 : nullptr);
    if (c) {
      c->x = x;
      c->q = std::move(q);
      c->k = std::move(k);
      c->v = std::move(v);
      c->ctx = std::move(ctx);
      c->x1 = std::move(x1);
      c->f = std::move(f);
      c->g = std::move(g);
    }
    return out;
  }

  RowMat head_forward(const RowMat& in, HeadCache* c) const {
    RowMat t = in * head_w_.value;
    detail::add_bias(t, head_b_.value);
    RowMat u = t.unaryExpr([](float a) { return detail::gelu(a); });
    RowMat z = detail::layer_norm(u, head_ln_g_, head_ln_b_, cfg_.ln_eps, c ? &c->ln : nullptr);
    RowMat logit = z * word_.value.transpose();
    detail::add_bias(logit, out_bias_.value);
    if (c) {
      c->in = in;
      c->t = std::move(t);
      c->u = std::move(u);
      c->z = std::move(z);
    }
    return logit;
  }

  RowMat head_backward(const RowMat& dlogits, HeadCache& c) {
    out_bias_.grad.row(0) += dlogits.colwise().sum();
    word_.grad.noalias() += dlogits.transpose() * c.z;
    RowMat dz = dlogits * word_.value;
    RowMat du = detail::layer_norm_backward(dz, c.ln, head_ln_g_, head_ln_b_);
    RowMat dt = du.array() * c.t.unaryExpr([](float a) { return detail::gelu_grad(a); }).array();
    head_w_.grad.noalias() += c.in.transpose() * dt;
    head_b_.grad.row(0) += dt.colwise().sum();
    return dt * head_w_.value.transpose();
  }

  void backward(const Batch& b, Cache& cache, RowMat dx) {
    for (std::size_t li = layers_.size(); li-- > 0;) dx = layer_backward(layers_[li], cache.layers[li], b, dx);
    RowMat demb = detail::layer_norm_backward(dx, cache.emb_ln, emb_ln_g_, emb_ln_b_);
    for (int r = 0; r < b.rows(); ++r) {
      word_.grad.row(b.ids[static_cast<std::size_t>(r)]) += demb.row(r);
      position_.grad.row(r % b.length) += demb.row(r);
    }
    type_.grad.row(0) += demb.colwise().sum();
  }

  RowMat layer_backward(Layer& L, LayerCache& c, const Batch& b, const RowMat& dout) {
    const int heads = cfg_.heads;
    const int d = cfg_.hidden / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    const int len = b.length;

    RowMat dr2 = detail::layer_norm_backward(dout, c.ln2, L.ln2_g, L.ln2_b);
    L.ff2_w.grad.noalias() += c.g.transpose() * dr2;
    L.ff2_b.grad.row(0) += dr2.colwise().sum();
    RowMat dg = dr2 * L.ff2_w.value.transpose();
    RowMat df = dg.array() * c.f.unaryExpr([](float a) { return detail::gelu_grad(a); }).array();
    L.ff1_w.grad.noalias() += c.x1.transpose() * df;
    L.ff1_b.grad.row(0) += df.colwise().sum();
    RowMat dx1 = dr2 + df * L.ff1_w.value.transpose();

    RowMat dr1 = detail::layer_norm_backward(dx1, c.ln1, L.ln1_g, L.ln1_b);
    L.o_w.grad.noalias() += c.ctx.transpose() * dr1;
    L.o_b.grad.row(0) += dr1.colwise().sum();
    RowMat dctx = dr1 * L.o_w.value.transpose();

    RowMat dq = RowMat::Zero(c.q.rows(), c.q.cols());
    RowMat dk = RowMat::Zero(c.k.rows(), c.k.cols());
    RowMat dv = RowMat::Zero(c.v.rows(), c.v.cols());
    for (int s = 0; s < b.batch; ++s) {
      for (int hd = 0; hd < heads; ++hd) {
        const RowMat& p = c.probs[static_cast<std::size_t>(s * heads + hd)];
        RowMat dc = dctx.block(s * len, hd * d, len, d);
        RowMat vb = c.v.block(s * len, hd * d, len, d);
        RowMat dp = dc * vb.transpose();
        dv.block(s * len, hd * d, len, d) = p.transpose() * dc;
        Eigen::VectorXf rowdot = (dp.array() * p.array()).rowwise().sum();
        RowMat ds = (p.array() * (dp.colwise() - rowdot).array()).matrix() * scale;
        dq.block(s * len, hd * d, len, d) = ds * c.k.block(s * len, hd * d, len, d);
        dk.block(s * len, hd * d, len, d) = ds.transpose() * c.q.block(s * len, hd * d, len, d);
      }
    }
    L.q_w.grad.noalias() += c.x.transpose() * dq;
    L.q_b.grad.row(0) += dq.colwise().sum();
    L.k_w.grad.noalias() += c.x.transpose() * dk;
    L.k_b.grad.row(0) += dk.colwise().sum();
    L.v_w.grad.noalias() += c.x.transpose() * dv;
    L.v_b.grad.row(0) += dv.colwise().sum();
    RowMat dx = dr1;
    dx.noalias() += dq * L.q_w.value.transpose();
    dx.noalias() += dk * L.k_w.value.transpose();
    dx.noalias() += dv * L.v_w.value.transpose();
    return dx;
  }

  EncoderConfig cfg_;
  Param word_, position_, type_, emb_ln_g_, emb_ln_b_;
  std::vector<Layer> layers_;
  Param head_w_, head_b_, head_ln_g_, head_ln_b_, out_bias_;
};

/// Decoupled-weight-decay Adam with bias correction.
class AdamW {
 public:
  struct Settings {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
  };

  AdamW() = default;
  explicit AdamW(Settings s) : s_(s) {}

  void step(std::vector<Param*>& params, double lr) {
    if (m_.size() != params.size()) {
      m_.clear();
      v_.clear();
      for (auto* p : params) {
        m_.push_back(RowMat::Zero(p->value.rows(), p->value.cols()));
        v_.push_back(RowMat::Zero(p->value.rows(), p->value.cols()));
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(s_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(s_.beta2, static_cast<double>(t_));
    if (lr == 0.0) return;
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      m_[i] = static_cast<float>(s_.beta1) * m_[i] + static_cast<float>(1.0 - s_.beta1) * p->grad;
      v_[i] = static_cast<float>(s_.beta2) * v_[i] +
              static_cast<float>(1.0 - s_.beta2) * p->grad.cwiseProduct(p->grad);
      if (p->decay && s_.weight_decay != 0.0) p->value *= static_cast<float>(1.0 - lr * s_.weight_decay);
      const auto mhat = m_[i].array() / static_cast<float>(bc1);
      const auto vhat = v_[i].array() / static_cast<float>(bc2);
      p->value.array() -= static_cast<float>(lr) * mhat / (vhat.sqrt() + static_cast<float>(s_.eps));
    }
  }

  long steps() const { return t_; }

 private:
  Settings s_;
  std::vector<RowMat> m_, v_;
  long t_ = 0;
};

/// Learning rate after `step` of `total` under linear decay to zero.
inline double linear_decay(double base_lr, long step, long total) {
  if (total <= 0) return base_lr;
  const double frac = 1.0 - static_cast<double>(step) / static_cast<double>(total);
  return base_lr * (frac > 0.0 ? frac : 0.0);
}

}  // namespace aacpred::nn

#endif  // AACPRED_NN_TRANSFORMER_HPP
