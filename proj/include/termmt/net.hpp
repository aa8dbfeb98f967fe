#pragma once

// Encoder-decoder transformer with explicit backward passes. Templated on
// the scalar type: the shipped models run float32, the finite-difference
// gradient tests instantiate the same code in double precision.
//
// Batches are represented as row-concatenated matrices (one row per
// position); attention runs per sentence over row blocks, so sentences of
// different lengths batch without padding.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "termmt/model_config.hpp"
#include "termmt/text.hpp"

namespace termmt::net {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  Mat<S> adam_m, adam_v;

  void resize(Eigen::Index rows, Eigen::Index cols) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
    adam_m.setZero(rows, cols);
    adam_v.setZero(rows, cols);
  }
};

template <typename S>
struct ParamStore {
  std::vector<Param<S>*> params;

  void add(Param<S>& p, std::string name) {
    p.name = std::move(name);
    params.push_back(&p);
  }
  void zero_grads() {
    for (auto* p : params) p->grad.setZero();
  }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (auto* p : params) n += static_cast<std::size_t>(p->value.size());
    return n;
  }
};

// Row ranges of the sentences concatenated into a batch matrix.
struct Spans {
  std::vector<int> begin;
  std::vector<int> len;
  int total = 0;

  static Spans from_lengths(const std::vector<int>& lengths) {
    Spans s;
    int at = 0;
    for (int l : lengths) {
      s.begin.push_back(at);
      s.len.push_back(l);
      at += l;
    }
    s.total = at;
    return s;
  }
  std::size_t count() const { return begin.size(); }
};

template <typename S>
void xavier_init(Mat<S>& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / (static_cast<double>(m.rows()) + m.cols()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      m(i, j) = static_cast<S>(rng.next_uniform(-limit, limit));
}

// ---------------------------------------------------------------------------
// Linear

template <typename S>
struct LinearCache {
  Mat<S> x;
};

template <typename S>
struct Linear {
  Param<S> w;  // in x out
  Param<S> b;  // 1 x out

  void init(int in, int out, Rng& rng, ParamStore<S>& store, const std::string& name) {
    w.resize(in, out);
    b.resize(1, out);
    xavier_init(w.value, rng);
    store.add(w, name + ".w");
    store.add(b, name + ".b");
  }

  Mat<S> forward(const Mat<S>& x, LinearCache<S>* cache) const {
    if (cache) cache->x = x;
    Mat<S> y = x * w.value;
    y.rowwise() += b.value.row(0);
    return y;
  }

  Mat<S> backward(const Mat<S>& dy, const LinearCache<S>& cache) {
    w.grad.noalias() += cache.x.transpose() * dy;
    b.grad.row(0) += dy.colwise().sum();
    return dy * w.value.transpose();
  }
};

// ---------------------------------------------------------------------------
// LayerNorm (per row, learned gain/bias)

template <typename S>
struct LayerNormCache {
  Mat<S> xhat;
  Mat<S> inv_std;  // T x 1
};

template <typename S>
struct LayerNorm {
  Param<S> gain;  // 1 x d
  Param<S> bias;  // 1 x d
  static constexpr double kEps = 1e-5;

  void init(int d, ParamStore<S>& store, const std::string& name) {
    gain.resize(1, d);
    bias.resize(1, d);
    gain.value.setOnes();
    store.add(gain, name + ".gain");
    store.add(bias, name + ".bias");
  }

  Mat<S> forward(const Mat<S>& x, LayerNormCache<S>* cache) const {
    const auto d = static_cast<S>(x.cols());
    Mat<S> xhat(x.rows(), x.cols());
    Mat<S> inv_std(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      S mu = x.row(i).mean();
      S var = (x.row(i).array() - mu).square().sum() / d;
      S inv = S(1) / std::sqrt(var + static_cast<S>(kEps));
      xhat.row(i) = (x.row(i).array() - mu) * inv;
      inv_std(i, 0) = inv;
    }
    Mat<S> y = xhat;
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      y.row(i) = xhat.row(i).cwiseProduct(gain.value.row(0)) + bias.value.row(0);
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  Mat<S> backward(const Mat<S>& dy, const LayerNormCache<S>& cache) {
    const auto d = static_cast<S>(dy.cols());
    Mat<S> dx(dy.rows(), dy.cols());
    for (Eigen::Index i = 0; i < dy.rows(); ++i) {
      auto dxhat = dy.row(i).cwiseProduct(gain.value.row(0));
      S m1 = dxhat.mean();
      S m2 = dxhat.cwiseProduct(cache.xhat.row(i)).sum() / d;
      dx.row(i) =
          (dxhat.array() - m1 - cache.xhat.row(i).array() * m2) * cache.inv_std(i, 0);
      gain.grad.row(0) += dy.row(i).cwiseProduct(cache.xhat.row(i));
      bias.grad.row(0) += dy.row(i);
    }
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Dropout (inverted; identity when p == 0 or not training)

template <typename S>
struct DropoutCache {
  Mat<S> mask;  // empty when dropout was a no-op
};

template <typename S>
Mat<S> dropout_forward(const Mat<S>& x, double p, Rng* rng, DropoutCache<S>* cache) {
  if (p <= 0.0 || rng == nullptr) return x;
  const S scale = static_cast<S>(1.0 / (1.0 - p));
  Mat<S> mask(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      mask(i, j) = (rng->next_double() < p) ? S(0) : scale;
  if (cache) cache->mask = mask;
  return x.cwiseProduct(mask);
}

template <typename S>
Mat<S> dropout_backward(const Mat<S>& dy, const DropoutCache<S>& cache) {
  if (cache.mask.size() == 0) return dy;
  return dy.cwiseProduct(cache.mask);
}

// ---------------------------------------------------------------------------
// Multi-head attention

template <typename S>
struct AttentionCache {
  LinearCache<S> q_in, k_in, v_in, o_in;
  Mat<S> q, k, v;
  std::vector<Mat<S>> probs;  // one per (sentence, head)
};

template <typename S>
struct MultiHeadAttention {
  int heads = 1;
  Linear<S> wq, wk, wv, wo;

  void init(int d, int num_heads, Rng& rng, ParamStore<S>& store, const std::string& name) {
    if (d % num_heads != 0)
      throw std::invalid_argument("model_size must be divisible by attention_heads");
    heads = num_heads;
    wq.init(d, d, rng, store, name + ".wq");
    wk.init(d, d, rng, store, name + ".wk");
    wv.init(d, d, rng, store, name + ".wv");
    wo.init(d, d, rng, store, name + ".wo");
  }

  // xq rows grouped by spans_q; xkv by spans_kv (same sentence count).
  Mat<S> forward(const Mat<S>& xq, const Spans& spans_q, const Mat<S>& xkv,
                 const Spans& spans_kv, bool causal, AttentionCache<S>* cache) const {
    const int d = static_cast<int>(xq.cols());
    const int dh = d / heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    AttentionCache<S> local;
    AttentionCache<S>& c = cache ? *cache : local;
    c.q = wq.forward(xq, cache ? &c.q_in : nullptr);
    c.k = wk.forward(xkv, cache ? &c.k_in : nullptr);
    c.v = wv.forward(xkv, cache ? &c.v_in : nullptr);
    c.probs.clear();

    Mat<S> ctx = Mat<S>::Zero(xq.rows(), d);
    for (std::size_t s = 0; s < spans_q.count(); ++s) {
      const int qb = spans_q.begin[s], ql = spans_q.len[s];
      const int kb = spans_kv.begin[s], kl = spans_kv.len[s];
      for (int h = 0; h < heads; ++h) {
        auto qs = c.q.block(qb, h * dh, ql, dh);
        auto ks = c.k.block(kb, h * dh, kl, dh);
        auto vs = c.v.block(kb, h * dh, kl, dh);
        Mat<S> scores = (qs * ks.transpose()) * scale;
        if (causal)
          for (int i = 0; i < ql; ++i)
            for (int j = i + 1; j < kl; ++j)
              scores(i, j) = static_cast<S>(-1e30);
        // Row-stable softmax.
        Mat<S> probs(ql, kl);
        for (int i = 0; i < ql; ++i) {
          S mx = scores.row(i).maxCoeff();
          probs.row(i) = (scores.row(i).array() - mx).exp();
          probs.row(i) /= probs.row(i).sum();
        }
        ctx.block(qb, h * dh, ql, dh).noalias() = probs * vs;
        if (cache) c.probs.push_back(std::move(probs));
      }
    }
    return wo.forward(ctx, cache ? &c.o_in : nullptr);
  }

  // Returns (dxq, dxkv).
  std::pair<Mat<S>, Mat<S>> backward(const Mat<S>& dout, const Spans& spans_q,
                                     const Spans& spans_kv, AttentionCache<S>& c) {
    const int d = static_cast<int>(c.q.cols());
    const int dh = d / heads;
    const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

    Mat<S> dctx = wo.backward(dout, c.o_in);
    Mat<S> dq = Mat<S>::Zero(c.q.rows(), d);
    Mat<S> dk = Mat<S>::Zero(c.k.rows(), d);
    Mat<S> dv = Mat<S>::Zero(c.v.rows(), d);

    std::size_t idx = 0;
    for (std::size_t s = 0; s < spans_q.count(); ++s) {
      const int qb = spans_q.begin[s], ql = spans_q.len[s];
      const int kb = spans_kv.begin[s], kl = spans_kv.len[s];
      for (int h = 0; h < heads; ++h, ++idx) {
        const Mat<S>& probs = c.probs[idx];
        auto qs = c.q.block(qb, h * dh, ql, dh);
        auto ks = c.k.block(kb, h * dh, kl, dh);
        auto vs = c.v.block(kb, h * dh, kl, dh);
        auto dctx_s = dctx.block(qb, h * dh, ql, dh);

        Mat<S> dprobs = dctx_s * vs.transpose();
        dv.block(kb, h * dh, kl, dh).noalias() += probs.transpose() * dctx_s;

        Mat<S> dscores(ql, kl);
        for (int i = 0; i < ql; ++i) {
          S dot = dprobs.row(i).cwiseProduct(probs.row(i)).sum();
          dscores.row(i).array() = probs.row(i).array() * (dprobs.row(i).array() - dot);
        }
        dq.block(qb, h * dh, ql, dh).noalias() += dscores * ks * scale;
        dk.block(kb, h * dh, kl, dh).noalias() += dscores.transpose() * qs * scale;
      }
    }
    Mat<S> dxq = wq.backward(dq, c.q_in);
    Mat<S> dxkv = wk.backward(dk, c.k_in);
    dxkv += wv.backward(dv, c.v_in);
    return {std::move(dxq), std::move(dxkv)};
  }
};

// ---------------------------------------------------------------------------
// Position-wise feed-forward (relu)

template <typename S>
struct FeedForwardCache {
  LinearCache<S> in1, in2;
  Mat<S> pre;  // pre-activation
};

template <typename S>
struct FeedForward {
  Linear<S> fc1, fc2;

  void init(int d, int hidden, Rng& rng, ParamStore<S>& store, const std::string& name) {
    fc1.init(d, hidden, rng, store, name + ".fc1");
    fc2.init(hidden, d, rng, store, name + ".fc2");
  }

  Mat<S> forward(const Mat<S>& x, FeedForwardCache<S>* cache) const {
    FeedForwardCache<S> local;
    FeedForwardCache<S>& c = cache ? *cache : local;
    c.pre = fc1.forward(x, cache ? &c.in1 : nullptr);
    Mat<S> h = c.pre.cwiseMax(S(0));
    return fc2.forward(h, cache ? &c.in2 : nullptr);
  }

  Mat<S> backward(const Mat<S>& dy, const FeedForwardCache<S>& c) {
    Mat<S> dh = fc2.backward(dy, c.in2);
    Mat<S> dpre = dh.cwiseProduct((c.pre.array() > S(0)).template cast<S>().matrix());
    return fc1.backward(dpre, c.in1);
  }
};

// ---------------------------------------------------------------------------
// Encoder / decoder layers (pre-norm; residual after dropout)

template <typename S>
struct EncoderLayerCache {
  LayerNormCache<S> ln1, ln2;
  AttentionCache<S> attn;
  FeedForwardCache<S> ffn;
  DropoutCache<S> drop1, drop2;
};

template <typename S>
struct EncoderLayer {
  LayerNorm<S> ln1, ln2;
  MultiHeadAttention<S> self_attn;
  FeedForward<S> ffn;
  double dropout = 0.0;

  void init(const ModelConfig& cfg, Rng& rng, ParamStore<S>& store, const std::string& name) {
    dropout = cfg.dropout;
    ln1.init(cfg.model_size, store, name + ".ln1");
    self_attn.init(cfg.model_size, cfg.attention_heads, rng, store, name + ".self");
    ln2.init(cfg.model_size, store, name + ".ln2");
    ffn.init(cfg.model_size, cfg.feed_forward_hidden, rng, store, name + ".ffn");
  }

  Mat<S> forward(const Mat<S>& x, const Spans& spans, Rng* drop_rng,
                 EncoderLayerCache<S>* cache) const {
    EncoderLayerCache<S> local;
    EncoderLayerCache<S>& c = cache ? *cache : local;
    Mat<S> nx = ln1.forward(x, cache ? &c.ln1 : nullptr);
    Mat<S> a = self_attn.forward(nx, spans, nx, spans, false, cache ? &c.attn : nullptr);
    Mat<S> x1 = x + dropout_forward(a, dropout, drop_rng, cache ? &c.drop1 : nullptr);
    Mat<S> f = ffn.forward(ln2.forward(x1, cache ? &c.ln2 : nullptr),
                           cache ? &c.ffn : nullptr);
    return x1 + dropout_forward(f, dropout, drop_rng, cache ? &c.drop2 : nullptr);
  }

  Mat<S> backward(const Mat<S>& dy, const Spans& spans, EncoderLayerCache<S>& c) {
    Mat<S> df = dropout_backward(dy, c.drop2);
    Mat<S> dx1 = dy + ln2.backward(ffn.backward(df, c.ffn), c.ln2);
    Mat<S> da = dropout_backward(dx1, c.drop1);
    auto [dq, dkv] = self_attn.backward(da, spans, spans, c.attn);
    return dx1 + ln1.backward(dq + dkv, c.ln1);
  }
};

template <typename S>
struct DecoderLayerCache {
  LayerNormCache<S> ln1, ln2, ln3;
  AttentionCache<S> self_attn, cross_attn;
  FeedForwardCache<S> ffn;
  DropoutCache<S> drop1, drop2, drop3;
};

template <typename S>
struct DecoderLayer {
  LayerNorm<S> ln1, ln2, ln3;
  MultiHeadAttention<S> self_attn, cross_attn;
  FeedForward<S> ffn;
  double dropout = 0.0;

  void init(const ModelConfig& cfg, Rng& rng, ParamStore<S>& store, const std::string& name) {
    dropout = cfg.dropout;
    ln1.init(cfg.model_size, store, name + ".ln1");
    self_attn.init(cfg.model_size, cfg.attention_heads, rng, store, name + ".self");
    ln2.init(cfg.model_size, store, name + ".ln2");
    cross_attn.init(cfg.model_size, cfg.attention_heads, rng, store, name + ".cross");
    ln3.init(cfg.model_size, store, name + ".ln3");
    ffn.init(cfg.model_size, cfg.feed_forward_hidden, rng, store, name + ".ffn");
  }

  // dmem accumulates the gradient flowing into the encoder memory.
  Mat<S> forward(const Mat<S>& x, const Spans& spans_tgt, const Mat<S>& mem,
                 const Spans& spans_src, Rng* drop_rng, DecoderLayerCache<S>* cache) const {
    DecoderLayerCache<S> local;
    DecoderLayerCache<S>& c = cache ? *cache : local;
    Mat<S> sa_in = ln1.forward(x, cache ? &c.ln1 : nullptr);
    Mat<S> sa = self_attn.forward(sa_in, spans_tgt, sa_in, spans_tgt, true,
                                  cache ? &c.self_attn : nullptr);
    Mat<S> x1 = x + dropout_forward(sa, dropout, drop_rng, cache ? &c.drop1 : nullptr);

    Mat<S> ca = cross_attn.forward(ln2.forward(x1, cache ? &c.ln2 : nullptr), spans_tgt,
                                   mem, spans_src, false, cache ? &c.cross_attn : nullptr);
    Mat<S> x2 = x1 + dropout_forward(ca, dropout, drop_rng, cache ? &c.drop2 : nullptr);

    Mat<S> f = ffn.forward(ln3.forward(x2, cache ? &c.ln3 : nullptr),
                           cache ? &c.ffn : nullptr);
    return x2 + dropout_forward(f, dropout, drop_rng, cache ? &c.drop3 : nullptr);
  }

  Mat<S> backward(const Mat<S>& dy, const Spans& spans_tgt, const Spans& spans_src,
                  Mat<S>& dmem, DecoderLayerCache<S>& c) {
    Mat<S> df = dropout_backward(dy, c.drop3);
    Mat<S> dx2 = dy + ln3.backward(ffn.backward(df, c.ffn), c.ln3);

    Mat<S> dca = dropout_backward(dx2, c.drop2);
    auto [dq_c, dkv_c] = cross_attn.backward(dca, spans_tgt, spans_src, c.cross_attn);
    dmem += dkv_c;
    Mat<S> dx1 = dx2 + ln2.backward(dq_c, c.ln2);

    Mat<S> dsa = dropout_backward(dx1, c.drop1);
    auto [dq_s, dkv_s] = self_attn.backward(dsa, spans_tgt, spans_tgt, c.self_attn);
    return dx1 + ln1.backward(dq_s + dkv_s, c.ln1);
  }
};

// ---------------------------------------------------------------------------
// Label-smoothed cross entropy (mean over rows)

template <typename S>
struct SmoothedLoss {
  S value = S(0);
  Mat<S> dlogits;
};

template <typename S>
SmoothedLoss<S> smoothed_cross_entropy(const Mat<S>& logits, const std::vector<int>& labels,
                                       double smoothing) {
  const auto n = logits.rows();
  const auto v = logits.cols();
  if (static_cast<std::size_t>(n) != labels.size())
    throw std::invalid_argument("label count mismatch");
  const S eps = static_cast<S>(smoothing);
  const S off = v > 1 ? eps / static_cast<S>(v - 1) : S(0);
  const S on = S(1) - eps;

  SmoothedLoss<S> out;
  out.dlogits.resize(n, v);
  S total = S(0);
  for (Eigen::Index i = 0; i < n; ++i) {
    S mx = logits.row(i).maxCoeff();
    Mat<S> ex = (logits.row(i).array() - mx).exp();
    S z = ex.sum();
    S lse = mx + std::log(z);
    // loss = -sum_j q_j * logp_j with q = (1-eps) one-hot + eps/(V-1) rest
    S logp_sum = logits.row(i).sum() - static_cast<S>(v) * lse;
    S logp_y = logits(i, labels[i]) - lse;
    total += -(on * logp_y + off * (logp_sum - logp_y));
    out.dlogits.row(i) = (ex / z).row(0);
    out.dlogits.row(i).array() -= off;
    out.dlogits(i, labels[i]) -= on - off;
  }
  const S inv_n = S(1) / static_cast<S>(n);
  out.value = total * inv_n;
  out.dlogits *= inv_n;
  return out;
}

// ---------------------------------------------------------------------------
// Whole network

template <typename S>
struct EmbedCache {
  std::vector<int> ids;
  std::vector<int> factors;
};

struct Example {
  std::vector<int> src_ids;
  std::vector<int> src_factors;
  std::vector<int> tgt_ids;  // without BOS/EOS
};

template <typename S>
struct ForwardCaches {
  EmbedCache<S> src_embed, tgt_embed;
  std::vector<EncoderLayerCache<S>> enc;
  LayerNormCache<S> enc_ln;
  std::vector<DecoderLayerCache<S>> dec;
  LayerNormCache<S> dec_ln;
  LinearCache<S> out;
  Spans spans_src, spans_tgt;
};

template <typename S>
class Transformer {
 public:
  ModelConfig cfg;
  Param<S> embed_word;    // vocab x word_embed_size (shared source/target)
  Param<S> embed_factor;  // 3 x factor_embed_size
  std::vector<EncoderLayer<S>> enc_layers;
  LayerNorm<S> enc_ln;
  std::vector<DecoderLayer<S>> dec_layers;
  LayerNorm<S> dec_ln;
  Linear<S> out_proj;  // model_size x vocab
  Mat<S> pos_enc;      // max_seq_len x model_size, constant
  ParamStore<S> store;

  void init(const ModelConfig& config) {
    cfg = config;
    cfg.validate();
    Rng rng(cfg.seed);

    embed_word.resize(cfg.vocab_size, cfg.word_embed_size());
    embed_factor.resize(3, cfg.factor_embed_size);
    const double we_limit = std::sqrt(3.0 / cfg.word_embed_size());
    for (Eigen::Index i = 0; i < embed_word.value.rows(); ++i)
      for (Eigen::Index j = 0; j < embed_word.value.cols(); ++j)
        embed_word.value(i, j) = static_cast<S>(rng.next_uniform(-we_limit, we_limit));
    const double fe_limit = std::sqrt(3.0 / cfg.factor_embed_size);
    for (Eigen::Index i = 0; i < 3; ++i)
      for (Eigen::Index j = 0; j < embed_factor.value.cols(); ++j)
        embed_factor.value(i, j) = static_cast<S>(rng.next_uniform(-fe_limit, fe_limit));
    store.add(embed_word, "embed.word");
    store.add(embed_factor, "embed.factor");

    enc_layers.resize(cfg.num_layers_enc);
    for (int l = 0; l < cfg.num_layers_enc; ++l)
      enc_layers[l].init(cfg, rng, store, "enc." + std::to_string(l));
    enc_ln.init(cfg.model_size, store, "enc.ln");

    dec_layers.resize(cfg.num_layers_dec);
    for (int l = 0; l < cfg.num_layers_dec; ++l)
      dec_layers[l].init(cfg, rng, store, "dec." + std::to_string(l));
    dec_ln.init(cfg.model_size, store, "dec.ln");

    out_proj.init(cfg.model_size, cfg.vocab_size, rng, store, "out");

    build_pos_enc();
  }

  void build_pos_enc() {
    const int d = cfg.model_size;
    pos_enc.resize(cfg.max_seq_len, d);
    for (int t = 0; t < cfg.max_seq_len; ++t)
      for (int j = 0; j < d; ++j) {
        double angle = t / std::pow(10000.0, 2.0 * (j / 2) / d);
        pos_enc(t, j) = static_cast<S>((j % 2 == 0) ? std::sin(angle) : std::cos(angle));
      }
  }

  // Concatenated word+factor embedding, scaled, with positions restarting at
  // each sentence boundary.
  Mat<S> embed(const std::vector<int>& ids, const std::vector<int>& factors,
               const Spans& spans, EmbedCache<S>* cache) const {
    if (ids.size() != factors.size())
      throw std::invalid_argument("embedding streams misaligned");
    const int dw = cfg.word_embed_size();
    const int df = cfg.factor_embed_size;
    const S scale = static_cast<S>(std::sqrt(static_cast<double>(cfg.model_size)));
    Mat<S> x(ids.size(), cfg.model_size);
    for (std::size_t s = 0; s < spans.count(); ++s) {
      for (int t = 0; t < spans.len[s]; ++t) {
        const int row = spans.begin[s] + t;
        const int id = ids[row];
        const int f = factors[row];
        if (id < 0 || id >= cfg.vocab_size) throw std::invalid_argument("subword id out of range");
        if (f < 0 || f > 2)
          throw std::invalid_argument("factor value out of range: " + std::to_string(f));
        x.block(row, 0, 1, dw) = embed_word.value.row(id) * scale;
        x.block(row, dw, 1, df) = embed_factor.value.row(f) * scale;
        x.row(row) += pos_enc.row(t);
      }
    }
    if (cache) {
      cache->ids = ids;
      cache->factors = factors;
    }
    return x;
  }

  void embed_backward(const Mat<S>& dx, const EmbedCache<S>& cache) {
    const int dw = cfg.word_embed_size();
    const int df = cfg.factor_embed_size;
    const S scale = static_cast<S>(std::sqrt(static_cast<double>(cfg.model_size)));
    for (Eigen::Index row = 0; row < dx.rows(); ++row) {
      embed_word.grad.row(cache.ids[row]) += dx.block(row, 0, 1, dw) * scale;
      embed_factor.grad.row(cache.factors[row]) += dx.block(row, dw, 1, df) * scale;
    }
  }

  Mat<S> encode(const Mat<S>& x0, const Spans& spans, Rng* drop_rng,
                ForwardCaches<S>* caches) const {
    Mat<S> x = x0;
    for (std::size_t l = 0; l < enc_layers.size(); ++l)
      x = enc_layers[l].forward(x, spans, drop_rng, caches ? &caches->enc[l] : nullptr);
    return enc_ln.forward(x, caches ? &caches->enc_ln : nullptr);
  }

  Mat<S> decode(const Mat<S>& y0, const Spans& spans_tgt, const Mat<S>& mem,
                const Spans& spans_src, Rng* drop_rng, ForwardCaches<S>* caches) const {
    Mat<S> y = y0;
    for (std::size_t l = 0; l < dec_layers.size(); ++l)
      y = dec_layers[l].forward(y, spans_tgt, mem, spans_src, drop_rng,
                                caches ? &caches->dec[l] : nullptr);
    return dec_ln.forward(y, caches ? &caches->dec_ln : nullptr);
  }

  // Mean label-smoothed loss over the batch; gradients accumulate into the
  // parameter store when train is set.
  S batch_loss(const std::vector<const Example*>& batch, bool train, Rng* drop_rng) {
    std::vector<int> src_ids, src_factors, tgt_in_ids, tgt_in_factors;
    std::vector<int> labels;
    std::vector<int> src_lens, tgt_lens;
    for (const auto* ex : batch) {
      if (static_cast<int>(ex->src_ids.size()) > cfg.max_seq_len ||
          static_cast<int>(ex->tgt_ids.size()) + 1 > cfg.max_seq_len)
        throw std::invalid_argument("sequence exceeds max_seq_len");
      src_lens.push_back(static_cast<int>(ex->src_ids.size()));
      tgt_lens.push_back(static_cast<int>(ex->tgt_ids.size()) + 1);
      src_ids.insert(src_ids.end(), ex->src_ids.begin(), ex->src_ids.end());
      src_factors.insert(src_factors.end(), ex->src_factors.begin(), ex->src_factors.end());
      tgt_in_ids.push_back(kBosId);
      tgt_in_ids.insert(tgt_in_ids.end(), ex->tgt_ids.begin(), ex->tgt_ids.end());
      tgt_in_factors.insert(tgt_in_factors.end(), ex->tgt_ids.size() + 1, 0);
      labels.insert(labels.end(), ex->tgt_ids.begin(), ex->tgt_ids.end());
      labels.push_back(kEosId);
    }
    ForwardCaches<S> caches;
    caches.enc.resize(enc_layers.size());
    caches.dec.resize(dec_layers.size());
    caches.spans_src = Spans::from_lengths(src_lens);
    caches.spans_tgt = Spans::from_lengths(tgt_lens);
    ForwardCaches<S>* cp = train ? &caches : nullptr;

    Rng* rng = train ? drop_rng : nullptr;
    Mat<S> x0 = embed(src_ids, src_factors, caches.spans_src, cp ? &caches.src_embed : nullptr);
    Mat<S> mem = encode(x0, caches.spans_src, rng, cp);
    Mat<S> y0 = embed(tgt_in_ids, tgt_in_factors, caches.spans_tgt,
                      cp ? &caches.tgt_embed : nullptr);
    Mat<S> h = decode(y0, caches.spans_tgt, mem, caches.spans_src, rng, cp);
    Mat<S> logits = out_proj.forward(h, cp ? &caches.out : nullptr);
    auto loss = smoothed_cross_entropy(logits, labels, cfg.label_smoothing);

    if (train) {
      Mat<S> dh = out_proj.backward(loss.dlogits, caches.out);
      dh = dec_ln.backward(dh, caches.dec_ln);
      Mat<S> dmem = Mat<S>::Zero(mem.rows(), mem.cols());
      for (int l = static_cast<int>(dec_layers.size()) - 1; l >= 0; --l)
        dh = dec_layers[l].backward(dh, caches.spans_tgt, caches.spans_src, dmem,
                                    caches.dec[l]);
      embed_backward(dh, caches.tgt_embed);

      Mat<S> dx = enc_ln.backward(dmem, caches.enc_ln);
      for (int l = static_cast<int>(enc_layers.size()) - 1; l >= 0; --l)
        dx = enc_layers[l].backward(dx, caches.spans_src, caches.enc[l]);
      embed_backward(dx, caches.src_embed);
    }
    return loss.value;
  }

  // --- inference ---------------------------------------------------------

  static constexpr int kPadId = 0;
  static constexpr int kBosId = 1;
  static constexpr int kEosId = 2;

  Mat<S> encode_source(const std::vector<int>& ids, const std::vector<int>& factors) const {
    if (static_cast<int>(ids.size()) > cfg.max_seq_len)
      throw std::invalid_argument("sequence exceeds max_seq_len");
    Spans spans = Spans::from_lengths({static_cast<int>(ids.size())});
    return encode(embed(ids, factors, spans, nullptr), spans, nullptr, nullptr);
  }

  // Log-probabilities of the next subword after the given target prefix.
  Eigen::Matrix<S, Eigen::Dynamic, 1> next_log_probs(const Mat<S>& memory,
                                                     const std::vector<int>& prefix) const {
    if (static_cast<int>(prefix.size()) + 1 > cfg.max_seq_len)
      throw std::invalid_argument("sequence exceeds max_seq_len");
    std::vector<int> in{kBosId};
    in.insert(in.end(), prefix.begin(), prefix.end());
    std::vector<int> factors(in.size(), 0);
    Spans spans_tgt = Spans::from_lengths({static_cast<int>(in.size())});
    Spans spans_src = Spans::from_lengths({static_cast<int>(memory.rows())});
    Mat<S> h = decode(embed(in, factors, spans_tgt, nullptr), spans_tgt, memory, spans_src,
                      nullptr, nullptr);
    Mat<S> logits = out_proj.forward(h.bottomRows(1), nullptr);
    S mx = logits.row(0).maxCoeff();
    Eigen::Matrix<S, Eigen::Dynamic, 1> lp = logits.row(0).transpose();
    S lse = mx + std::log((logits.row(0).array() - mx).exp().sum());
    lp.array() -= lse;
    return lp;
  }

  // Full next-token distribution (probabilities, sums to one).
  Eigen::Matrix<S, Eigen::Dynamic, 1> next_distribution(const std::vector<int>& src_ids,
                                                        const std::vector<int>& src_factors,
                                                        const std::vector<int>& prefix) const {
    Mat<S> mem = encode_source(src_ids, src_factors);
    auto lp = next_log_probs(mem, prefix);
    return lp.array().exp();
  }
};

// ---------------------------------------------------------------------------
// Adam with linear warmup to a fixed learning rate.

template <typename S>
class AdamOptimizer {
 public:
  AdamOptimizer(double lr, int warmup_steps) : lr_(lr), warmup_(warmup_steps) {}

  void step(ParamStore<S>& store) {
    ++t_;
    const double warm = warmup_ > 0 ? std::min(1.0, static_cast<double>(t_) / warmup_) : 1.0;
    const S lr = static_cast<S>(lr_ * warm);
    const S b1 = static_cast<S>(0.9), b2 = static_cast<S>(0.999);
    const S eps = static_cast<S>(1e-8);
    const S bc1 = S(1) - static_cast<S>(std::pow(0.9, t_));
    const S bc2 = S(1) - static_cast<S>(std::pow(0.999, t_));
    for (auto* p : store.params) {
      p->adam_m.array() = b1 * p->adam_m.array() + (S(1) - b1) * p->grad.array();
      p->adam_v.array() = b2 * p->adam_v.array() + (S(1) - b2) * p->grad.array().square();
      p->value.array() -=
          lr * (p->adam_m.array() / bc1) /
          ((p->adam_v.array() / bc2).sqrt() + eps);
    }
  }

  std::int64_t steps() const { return t_; }

 private:
  double lr_;
  int warmup_;
  std::int64_t t_ = 0;
};

}  // namespace termmt::net
