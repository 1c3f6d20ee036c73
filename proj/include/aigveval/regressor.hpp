#pragma once

#include "aigveval/common.hpp"
#include "aigveval/prompting.hpp"

#include <cmath>
#include <set>
#include <string>
#include <vector>

namespace aigveval {

// ---------------------------------------------------------------------------
// Eq.-5 score head

struct LevelLogits {
  Vec values;  // 5 entries, ordered bad..excellent

  void validate() const {
    if (values.size() != 5) throw ValidationError("LevelLogits: need exactly 5 entries");
    if (!values.allFinite()) throw ValidationError("LevelLogits: non-finite logits");
  }
};

constexpr int kQualityLevels = 5;

inline Vec level_softmax(const Vec& logits) {
  Real mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp();
  return e / e.sum();
}

/// s = sum_i i * softmax(logits)_i with levels weighted 1..5.
inline Real score_from_logits(const LevelLogits& logits) {
  logits.validate();
  Vec p = level_softmax(logits.values);
  Real s = 0;
  for (int i = 0; i < kQualityLevels; ++i) s += (i + 1) * p[i];
  return s;
}

/// d score / d logits. Softmax-weighted mean gradient: p_i * ((i+1) - s).
inline Vec score_from_logits_grad(const LevelLogits& logits) {
  logits.validate();
  Vec p = level_softmax(logits.values);
  Real s = 0;
  for (int i = 0; i < kQualityLevels; ++i) s += (i + 1) * p[i];
  Vec g(kQualityLevels);
  for (int i = 0; i < kQualityLevels; ++i) g[i] = p[i] * ((i + 1) - s);
  return g;
}

/// Linear map of [1,5] onto [lo, hi].
inline Real rescale_score(Real s, Real lo, Real hi) {
  if (!(hi > lo)) throw ValidationError("rescale_score: degenerate target interval");
  return lo + (s - 1.0) / 4.0 * (hi - lo);
}

// ---------------------------------------------------------------------------
// LoRA

struct LoRAConfig {
  int rank = 8;
  std::set<std::string> targets = {"query", "key"};
  Real scaling = 1.0;

  void validate() const {
    if (rank < 1) throw ValidationError("LoRAConfig: rank must be >= 1");
    for (const auto& t : targets)
      if (t != "query" && t != "key")
        throw ValidationError("LoRAConfig: unsupported target '" + t + "'");
  }
};

struct LoRAFactors {
  Mat A;  // rank x d_in
  Mat B;  // d_out x rank
  Real scaling = 1.0;

  bool enabled() const { return A.size() > 0; }
  Mat delta() const { return scaling * B * A; }

  static LoRAFactors init(int d_out, int d_in, int rank, Real scaling, Rng& rng) {
    if (rank > std::min(d_out, d_in))
      throw ValidationError("LoRA rank exceeds min(d_in, d_out)");
    LoRAFactors f;
    f.A = random_matrix(rng, rank, d_in, 1.0 / std::sqrt(static_cast<Real>(d_in)));
    f.B = Mat::Zero(d_out, rank);  // zero-init keeps the adapted forward identical to base
    f.scaling = scaling;
    return f;
  }
};

/// W + scaling * B * A, the merged effective weight.
inline Mat lora_apply(const Mat& W, const Mat& A, const Mat& B, Real scaling) {
  if (A.rows() != B.cols() || A.cols() != W.cols() || B.rows() != W.rows())
    throw ValidationError("lora_apply: incompatible factor shapes");
  return W + scaling * B * A;
}

// ---------------------------------------------------------------------------
// Toy causal decoder: pre-norm residual blocks with multi-head self-attention
// and a ReLU MLP, read out through a 5-way head at the final position. Stands
// in for the 7B decoder; an adapter over a real LLM's level-token logits fits
// the same LevelLogits contract.

struct ToyDecoderConfig {
  int layers = 2;
  int heads = 4;
  int d_model = 128;
  int hidden = 0;  // 0 -> 4 * d_model

  int hidden_dim() const { return hidden > 0 ? hidden : 4 * d_model; }

  void validate() const {
    if (layers < 1 || heads < 1 || d_model < 1)
      throw ValidationError("ToyDecoderConfig: sizes must be positive");
    if (d_model % heads != 0)
      throw ValidationError("ToyDecoderConfig: d_model must be divisible by heads");
  }
};

struct AttentionWeights {
  // Stored d_out x d_in; forward multiplies rows of the sequence by W^T.
  Mat Wq, Wk, Wv, Wo;
  LoRAFactors lora_q, lora_k;
};

struct MlpWeights {
  Mat W1;  // hidden x d_model
  Vec b1;
  Mat W2;  // d_model x hidden
  Vec b2;
};

struct DecoderLayer {
  AttentionWeights attn;
  MlpWeights mlp;
};

struct ToyDecoder {
  ToyDecoderConfig config;
  std::vector<DecoderLayer> layers;
  Mat readout_W;  // 5 x d_model
  Vec readout_b;  // 5

  static ToyDecoder init(const ToyDecoderConfig& cfg, const LoRAConfig& lora, Rng& rng) {
    cfg.validate();
    lora.validate();
    const int d = cfg.d_model, h = cfg.hidden_dim();
    const Real ws = 1.0 / std::sqrt(static_cast<Real>(d));
    ToyDecoder dec;
    dec.config = cfg;
    for (int l = 0; l < cfg.layers; ++l) {
      DecoderLayer layer;
      layer.attn.Wq = random_matrix(rng, d, d, ws);
      layer.attn.Wk = random_matrix(rng, d, d, ws);
      layer.attn.Wv = random_matrix(rng, d, d, ws);
      layer.attn.Wo = random_matrix(rng, d, d, ws);
      if (lora.targets.count("query"))
        layer.attn.lora_q = LoRAFactors::init(d, d, lora.rank, lora.scaling, rng);
      if (lora.targets.count("key"))
        layer.attn.lora_k = LoRAFactors::init(d, d, lora.rank, lora.scaling, rng);
      layer.mlp.W1 = random_matrix(rng, h, d, ws);
      layer.mlp.b1 = Vec::Zero(h);
      layer.mlp.W2 = random_matrix(rng, d, h, 1.0 / std::sqrt(static_cast<Real>(h)));
      layer.mlp.b2 = Vec::Zero(d);
      dec.layers.push_back(std::move(layer));
    }
    dec.readout_W = random_matrix(rng, kQualityLevels, d, ws);
    dec.readout_b = Vec::Zero(kQualityLevels);
    return dec;
  }
};

namespace detail {

constexpr Real kLnEps = 1e-5;

struct LayerNormCache {
  Mat normalized;  // y
  Vec inv_std;     // per row
};

inline Mat layer_norm(const Mat& x, LayerNormCache& cache) {
  cache.normalized.resize(x.rows(), x.cols());
  cache.inv_std.resize(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    Real mean = x.row(r).mean();
    Real var = (x.row(r).array() - mean).square().mean();
    Real inv = 1.0 / std::sqrt(var + kLnEps);
    cache.inv_std[r] = inv;
    cache.normalized.row(r) = (x.row(r).array() - mean) * inv;
  }
  return cache.normalized;
}

inline Mat layer_norm_backward(const Mat& dy, const LayerNormCache& cache) {
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    Real mean_dy = dy.row(r).mean();
    Real mean_dyy = dy.row(r).cwiseProduct(cache.normalized.row(r)).mean();
    dx.row(r) = cache.inv_std[r] *
                (dy.row(r).array() - mean_dy - cache.normalized.row(r).array() * mean_dyy);
  }
  return dx;
}

struct LayerCache {
  LayerNormCache ln1, ln2;
  Mat x_in;          // layer input
  Mat q, k, v;       // L x d after projections
  std::vector<Mat> probs;  // per head, L x L softmax rows (causal)
  Mat attn_concat;   // L x d, pre-Wo
  Mat x_mid;         // after attention residual
  Mat mlp_pre;       // L x hidden, pre-ReLU
  Mat mlp_act;       // L x hidden, post-ReLU
};

}  // namespace detail

struct DecoderCache {
  std::vector<detail::LayerCache> layers;
  detail::LayerNormCache ln_final;
  Mat x_final;  // normalized final-layer output
};

inline LevelLogits decoder_forward(const ToyDecoder& dec, const MultiModalSequence& seq,
                                   DecoderCache* cache = nullptr) {
  if (seq.embeddings.cols() != dec.config.d_model)
    throw ValidationError("decoder_forward: sequence width " +
                          std::to_string(seq.embeddings.cols()) + " vs decoder d_model " +
                          std::to_string(dec.config.d_model));
  const int L = static_cast<int>(seq.embeddings.rows());
  const int H = dec.config.heads;
  const int dh = dec.config.d_model / H;
  const Real inv_sqrt_dh = 1.0 / std::sqrt(static_cast<Real>(dh));

  DecoderCache local;
  DecoderCache& cc = cache ? *cache : local;
  cc.layers.assign(dec.layers.size(), {});

  Mat x = seq.embeddings;
  for (std::size_t l = 0; l < dec.layers.size(); ++l) {
    const DecoderLayer& layer = dec.layers[l];
    detail::LayerCache& lc = cc.layers[l];
    lc.x_in = x;
    Mat xn = detail::layer_norm(x, lc.ln1);

    Mat wq_eff = layer.attn.lora_q.enabled()
                     ? lora_apply(layer.attn.Wq, layer.attn.lora_q.A, layer.attn.lora_q.B,
                                  layer.attn.lora_q.scaling)
                     : layer.attn.Wq;
    Mat wk_eff = layer.attn.lora_k.enabled()
                     ? lora_apply(layer.attn.Wk, layer.attn.lora_k.A, layer.attn.lora_k.B,
                                  layer.attn.lora_k.scaling)
                     : layer.attn.Wk;
    lc.q = xn * wq_eff.transpose();
    lc.k = xn * wk_eff.transpose();
    lc.v = xn * layer.attn.Wv.transpose();

    lc.probs.resize(H);
    lc.attn_concat.resize(L, dec.config.d_model);
    for (int h = 0; h < H; ++h) {
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      Mat scores = qh * kh.transpose() * inv_sqrt_dh;
      Mat& p = lc.probs[h];
      p = Mat::Zero(L, L);
      for (int r = 0; r < L; ++r) {
        // Causal: position r attends to [0, r].
        auto row = scores.row(r).head(r + 1);
        Real mx = row.maxCoeff();
        Eigen::ArrayXd e = (row.array() - mx).exp();
        p.row(r).head(r + 1) = (e / e.sum()).matrix();
      }
      lc.attn_concat.middleCols(h * dh, dh) = p * vh;
    }
    lc.x_mid = x + lc.attn_concat * layer.attn.Wo.transpose();

    Mat xn2 = detail::layer_norm(lc.x_mid, lc.ln2);
    lc.mlp_pre = (xn2 * layer.mlp.W1.transpose()).rowwise() + layer.mlp.b1.transpose();
    lc.mlp_act = lc.mlp_pre.cwiseMax(0.0);
    x = lc.x_mid + ((lc.mlp_act * layer.mlp.W2.transpose()).rowwise() + layer.mlp.b2.transpose());
  }

  cc.x_final = detail::layer_norm(x, cc.ln_final);
  LevelLogits logits;
  logits.values = dec.readout_W * cc.x_final.row(L - 1).transpose() + dec.readout_b;
  return logits;
}

/// Gradients of the decoder's trainable surface plus the input sequence.
struct DecoderGrads {
  struct LayerGrads {
    Mat dA_q, dB_q, dA_k, dB_k;
  };
  std::vector<LayerGrads> layers;
  Mat d_readout_W;
  Vec d_readout_b;
  Mat d_input;  // L x d_model
};

inline DecoderGrads decoder_backward(const ToyDecoder& dec, const DecoderCache& cache,
                                     const Vec& d_logits) {
  const int H = dec.config.heads;
  const int dh = dec.config.d_model / H;
  const Real inv_sqrt_dh = 1.0 / std::sqrt(static_cast<Real>(dh));
  const int L = static_cast<int>(cache.x_final.rows());

  DecoderGrads grads;
  grads.layers.resize(dec.layers.size());
  grads.d_readout_W = d_logits * cache.x_final.row(L - 1);
  grads.d_readout_b = d_logits;

  Mat d_xf = Mat::Zero(L, dec.config.d_model);
  d_xf.row(L - 1) = d_logits.transpose() * dec.readout_W;
  Mat dx = detail::layer_norm_backward(d_xf, cache.ln_final);

  for (int l = static_cast<int>(dec.layers.size()) - 1; l >= 0; --l) {
    const DecoderLayer& layer = dec.layers[l];
    const detail::LayerCache& lc = cache.layers[static_cast<std::size_t>(l)];
    DecoderGrads::LayerGrads& lg = grads.layers[static_cast<std::size_t>(l)];

    // MLP block: x_out = x_mid + relu(ln2(x_mid) W1^T + b1) W2^T + b2.
    Mat d_mlp_out = dx;
    Mat d_act = d_mlp_out * layer.mlp.W2;
    Mat d_pre = (lc.mlp_pre.array() > 0.0).select(d_act, 0.0);
    Mat d_xn2 = d_pre * layer.mlp.W1;
    Mat d_xmid = dx + detail::layer_norm_backward(d_xn2, lc.ln2);

    // Attention block: x_mid = x_in + (concat_h P_h V_h) Wo^T.
    Mat d_attn_out = d_xmid;
    Mat d_concat = d_attn_out * layer.attn.Wo;
    Mat dq(L, dec.config.d_model), dk(L, dec.config.d_model), dv(L, dec.config.d_model);
    for (int h = 0; h < H; ++h) {
      auto qh = lc.q.middleCols(h * dh, dh);
      auto kh = lc.k.middleCols(h * dh, dh);
      auto vh = lc.v.middleCols(h * dh, dh);
      const Mat& p = lc.probs[h];
      Mat d_oh = d_concat.middleCols(h * dh, dh);
      Mat d_p = d_oh * vh.transpose();
      dv.middleCols(h * dh, dh) = p.transpose() * d_oh;
      Mat d_scores(L, L);
      for (int r = 0; r < L; ++r) {
        Real dot = d_p.row(r).head(r + 1).cwiseProduct(p.row(r).head(r + 1)).sum();
        d_scores.row(r).setZero();
        d_scores.row(r).head(r + 1) =
            p.row(r).head(r + 1).cwiseProduct((d_p.row(r).head(r + 1).array() - dot).matrix());
      }
      d_scores *= inv_sqrt_dh;
      dq.middleCols(h * dh, dh) = d_scores * kh;
      dk.middleCols(h * dh, dh) = d_scores.transpose() * qh;
    }

    const Mat& xn = lc.ln1.normalized;
    Mat wq_eff = layer.attn.lora_q.enabled()
                     ? lora_apply(layer.attn.Wq, layer.attn.lora_q.A, layer.attn.lora_q.B,
                                  layer.attn.lora_q.scaling)
                     : layer.attn.Wq;
    Mat wk_eff = layer.attn.lora_k.enabled()
                     ? lora_apply(layer.attn.Wk, layer.attn.lora_k.A, layer.attn.lora_k.B,
                                  layer.attn.lora_k.scaling)
                     : layer.attn.Wk;
    Mat d_xn = dq * wq_eff + dk * wk_eff + dv * layer.attn.Wv;
    if (layer.attn.lora_q.enabled()) {
      Mat d_wq = dq.transpose() * xn;  // d_out x d_in
      lg.dA_q = layer.attn.lora_q.scaling * layer.attn.lora_q.B.transpose() * d_wq;
      lg.dB_q = layer.attn.lora_q.scaling * d_wq * layer.attn.lora_q.A.transpose();
    }
    if (layer.attn.lora_k.enabled()) {
      Mat d_wk = dk.transpose() * xn;
      lg.dA_k = layer.attn.lora_k.scaling * layer.attn.lora_k.B.transpose() * d_wk;
      lg.dB_k = layer.attn.lora_k.scaling * d_wk * layer.attn.lora_k.A.transpose();
    }
    dx = d_xmid + detail::layer_norm_backward(d_xn, lc.ln1);
  }
  grads.d_input = dx;
  return grads;
}

}  // namespace aigveval
