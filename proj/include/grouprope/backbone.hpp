#pragma once

// Tiny diffusion-transformer backbone with hand-written reverse mode.
//
// Per block:
//   fused  = [latent ; adapter(dense)]            positions [pi ; pi_dense]
//   y      = latent + trunc(SelfAttn(LN(fused)))   rotary on q, k
//   y      = y + CrossAttn(LN(y), text)
//   y      = y + FFN(LN(y))
// Only latent rows survive the self-attention; dense tokens act as extra keys
// and values and are re-fused, unchanged, in every block.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "grouprope/conditioning.hpp"
#include "grouprope/grid.hpp"
#include "grouprope/latent.hpp"
#include "grouprope/rope_core.hpp"

namespace grouprope {

struct BackboneConfig {
  std::size_t model_dim = 64;
  std::size_t heads = 2;
  std::size_t blocks = 2;
  std::size_t ff_mult = 4;
  std::size_t text_dim = 32;
  std::size_t dense_dim = 32;
  std::size_t latent_channels = 12;
  PatchSpec patch{1, 2, 2};
  RopeDims rope{};
  bool zero_velocity = false;  // debug backbone: v == 0 everywhere

  std::size_t head_dim() const { return model_dim / heads; }
  std::size_t token_dim() const { return latent_channels * patch.volume(); }

  void validate() const {
    if (heads == 0 || model_dim % heads != 0) {
      throw std::invalid_argument("BackboneConfig: model_dim must be divisible by heads");
    }
    rope.validate();
    if (rope.total() != head_dim()) {
      throw std::invalid_argument("BackboneConfig: rope dims sum to " +
                                  std::to_string(rope.total()) + " but head dim is " +
                                  std::to_string(head_dim()));
    }
    if (model_dim % 2 != 0) {
      throw std::invalid_argument("BackboneConfig: model_dim must be even");
    }
  }
};

struct BlockParams {
  Mat wq, wk, wv, wo;  // self-attention, D x D
  Mat cq, co;          // cross-attention query / output, D x D
  Mat ck, cv;          // cross-attention key / value, D_c x D
  Mat w1, w2;          // D x F, F x D
  RowVec b1, b2;
};

struct BackboneParams {
  BackboneConfig cfg;
  Mat w_in;  // token_dim x D
  RowVec b_in;
  Mat adapter;  // dense_dim x D
  std::vector<BlockParams> blocks;
  Mat w_out;  // D x token_dim
  RowVec b_out;
};

namespace detail {

inline Mat random_matrix(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = normal(rng);
  return m;
}

inline RowVec random_row(std::mt19937_64& rng, std::size_t cols, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  RowVec v(static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = normal(rng);
  return v;
}

inline double fan_in_scale(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

}  // namespace detail

inline BackboneParams init_backbone(const BackboneConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  using detail::fan_in_scale;
  using detail::random_matrix;
  using detail::random_row;
  std::mt19937_64 rng(derive_seed(seed, "backbone"));
  const std::size_t D = cfg.model_dim;
  const std::size_t F = cfg.ff_mult * D;
  BackboneParams p;
  p.cfg = cfg;
  p.w_in = random_matrix(rng, cfg.token_dim(), D, fan_in_scale(cfg.token_dim()));
  p.b_in = random_row(rng, D, 0.02);
  p.adapter = random_matrix(rng, cfg.dense_dim, D, fan_in_scale(cfg.dense_dim));
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    BlockParams bp;
    bp.wq = random_matrix(rng, D, D, fan_in_scale(D));
    bp.wk = random_matrix(rng, D, D, fan_in_scale(D));
    bp.wv = random_matrix(rng, D, D, fan_in_scale(D));
    bp.wo = random_matrix(rng, D, D, fan_in_scale(D));
    bp.cq = random_matrix(rng, D, D, fan_in_scale(D));
    bp.ck = random_matrix(rng, cfg.text_dim, D, fan_in_scale(cfg.text_dim));
    bp.cv = random_matrix(rng, cfg.text_dim, D, fan_in_scale(cfg.text_dim));
    bp.co = random_matrix(rng, D, D, fan_in_scale(D));
    bp.w1 = random_matrix(rng, D, F, fan_in_scale(D));
    bp.b1 = random_row(rng, F, 0.02);
    bp.w2 = random_matrix(rng, F, D, fan_in_scale(F));
    bp.b2 = random_row(rng, D, 0.02);
    p.blocks.push_back(std::move(bp));
  }
  p.w_out = random_matrix(rng, D, cfg.token_dim(), fan_in_scale(D));
  p.b_out = random_row(rng, cfg.token_dim(), 0.02);
  return p;
}

// ---------------------------------------------------------------------------
// Layer primitives

constexpr double kLayerNormEps = 1e-6;

struct LayerNormCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

/// Affine-free per-row layer normalization.
inline Mat layer_norm(const Mat& x, LayerNormCache* cache = nullptr) {
  const auto n = static_cast<double>(x.cols());
  Mat out(x.rows(), x.cols());
  Eigen::VectorXd inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).sum() / n;
    const RowVec centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / n;
    inv_std(r) = 1.0 / std::sqrt(var + kLayerNormEps);
    out.row(r) = centered * inv_std(r);
  }
  if (cache) {
    cache->xhat = out;
    cache->inv_std = std::move(inv_std);
  }
  return out;
}

inline Mat layer_norm_backward(const Mat& dy, const LayerNormCache& c) {
  const auto n = static_cast<double>(dy.cols());
  Mat dx(dy.rows(), dy.cols());
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    const double mean_dy = dy.row(r).sum() / n;
    const double mean_dy_xhat = dy.row(r).dot(c.xhat.row(r)) / n;
    dx.row(r) = c.inv_std(r) *
                (dy.row(r).array() - mean_dy - c.xhat.row(r).array() * mean_dy_xhat).matrix();
  }
  return dx;
}

inline double gelu(double x) {
  constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
  return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
}

inline double gelu_grad(double x) {
  constexpr double k = 0.7978845608028654;
  const double u = k * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * k * (1.0 + 3.0 * 0.044715 * x * x);
}

/// Rotates every head slice of every row by that row's phases. With
/// `inverse`, rotates by the conjugate phases (the transpose of the rotation).
inline void rotate_heads(Mat& x, const PositionalEncoding& enc, std::size_t heads,
                         bool inverse = false) {
  const auto head_dim = static_cast<std::size_t>(x.cols()) / heads;
  if (enc.rows != static_cast<std::size_t>(x.rows()) || 2 * enc.pairs != head_dim) {
    throw std::invalid_argument("rotate_heads: encoding is " + std::to_string(enc.rows) + "x" +
                                std::to_string(enc.pairs) + " pairs, tokens are " +
                                std::to_string(x.rows()) + "x" + std::to_string(head_dim) +
                                " per head");
  }
  std::vector<Complex> conj(enc.pairs);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    std::span<const Complex> phases = enc.row(static_cast<std::size_t>(r));
    if (inverse) {
      for (std::size_t j = 0; j < enc.pairs; ++j) conj[j] = std::conj(phases[j]);
      phases = conj;
    }
    double* row = x.row(r).data();
    for (std::size_t hd = 0; hd < heads; ++hd) {
      std::span<double> slice(row + hd * head_dim, head_dim);
      apply_rotary_into(slice, phases, slice);
    }
  }
}

struct AttentionCache {
  Mat q, k, v;             // inputs as seen by the softmax (after rotary)
  std::vector<Mat> probs;  // per head, Nq x Nk
};

/// softmax(q k^T / sqrt(d)) v for a single head.
inline Mat attention(const Mat& q, const Mat& k, const Mat& v, Mat* probs_out = nullptr) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw std::invalid_argument("attention: inconsistent q/k/v shapes");
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Mat scores = (q * k.transpose()) * scale;
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    const double m = scores.row(r).maxCoeff();
    scores.row(r) = (scores.row(r).array() - m).exp();
    scores.row(r) /= scores.row(r).sum();
  }
  Mat out = scores * v;
  if (probs_out) *probs_out = std::move(scores);
  return out;
}

inline Mat multihead_attention(const Mat& q, const Mat& k, const Mat& v, std::size_t heads,
                               AttentionCache* cache = nullptr) {
  const auto hd = q.cols() / static_cast<Eigen::Index>(heads);
  Mat out(q.rows(), v.cols());
  if (cache) {
    cache->q = q;
    cache->k = k;
    cache->v = v;
    cache->probs.assign(heads, Mat());
  }
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * hd;
    Mat probs;
    out.middleCols(c0, hd) =
        attention(q.middleCols(c0, hd), k.middleCols(c0, hd), v.middleCols(c0, hd), &probs);
    if (cache) cache->probs[h] = std::move(probs);
  }
  return out;
}

struct AttentionGrads {
  Mat dq, dk, dv;
};

inline AttentionGrads multihead_attention_backward(const Mat& dout, const AttentionCache& c,
                                                   std::size_t heads) {
  const auto hd = c.q.cols() / static_cast<Eigen::Index>(heads);
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  AttentionGrads g{Mat::Zero(c.q.rows(), c.q.cols()), Mat::Zero(c.k.rows(), c.k.cols()),
                   Mat::Zero(c.v.rows(), c.v.cols())};
  for (std::size_t h = 0; h < heads; ++h) {
    const auto c0 = static_cast<Eigen::Index>(h) * hd;
    const Mat& P = c.probs[h];
    const Mat d_o = dout.middleCols(c0, hd);
    g.dv.middleCols(c0, hd) = P.transpose() * d_o;
    const Mat dP = d_o * c.v.middleCols(c0, hd).transpose();
    Mat dS(P.rows(), P.cols());
    for (Eigen::Index r = 0; r < P.rows(); ++r) {
      const double inner = dP.row(r).dot(P.row(r));
      dS.row(r) = P.row(r).array() * (dP.row(r).array() - inner);
    }
    dS *= scale;
    g.dq.middleCols(c0, hd) = dS * c.k.middleCols(c0, hd);
    g.dk.middleCols(c0, hd) = dS.transpose() * c.q.middleCols(c0, hd);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Fusion and the transformer block

struct FusedSequence {
  Mat tokens;
  PositionalEncoding positions;
  std::size_t latent_count = 0;
};

/// [latent ; dense] with positions concatenated in the same order.
inline FusedSequence fuse_tokens(const Mat& latent_tokens, const PositionalEncoding& latent_pos,
                                 const Mat& dense_tokens, const PositionalEncoding& dense_pos) {
  if (latent_pos.rows != static_cast<std::size_t>(latent_tokens.rows())) {
    throw std::invalid_argument("fuse_tokens: latent positions do not match latent tokens");
  }
  if (dense_tokens.rows() > 0) {
    if (dense_tokens.cols() != latent_tokens.cols()) {
      throw std::invalid_argument("fuse_tokens: dense token dim " +
                                  std::to_string(dense_tokens.cols()) + " != latent dim " +
                                  std::to_string(latent_tokens.cols()));
    }
    if (dense_pos.rows != static_cast<std::size_t>(dense_tokens.rows()) ||
        dense_pos.pairs != latent_pos.pairs) {
      throw std::invalid_argument("fuse_tokens: dense positions do not match dense tokens");
    }
  }
  FusedSequence seq;
  seq.latent_count = static_cast<std::size_t>(latent_tokens.rows());
  seq.tokens.resize(latent_tokens.rows() + dense_tokens.rows(), latent_tokens.cols());
  seq.tokens.topRows(latent_tokens.rows()) = latent_tokens;
  if (dense_tokens.rows() > 0) seq.tokens.bottomRows(dense_tokens.rows()) = dense_tokens;
  seq.positions = PositionalEncoding(static_cast<std::size_t>(seq.tokens.rows()), latent_pos.pairs);
  std::copy(latent_pos.phases.begin(), latent_pos.phases.end(), seq.positions.phases.begin());
  if (dense_tokens.rows() > 0) {
    std::copy(dense_pos.phases.begin(), dense_pos.phases.end(),
              seq.positions.phases.begin() + static_cast<std::ptrdiff_t>(latent_pos.phases.size()));
  }
  return seq;
}

struct BlockCache {
  std::size_t latent_count = 0;
  LayerNormCache ln1, ln2, ln3;
  AttentionCache self_attn, cross_attn;
  Mat h2;
  Mat h3, pre_act;
  Mat act;
  PositionalEncoding positions;
};

/// One block over a fused sequence; returns the latent_count updated latent rows.
inline Mat transformer_block(const FusedSequence& seq, const Mat& text, const BlockParams& p,
                             std::size_t heads, BlockCache* cache = nullptr) {
  const auto S = static_cast<Eigen::Index>(seq.latent_count);
  if (S > seq.tokens.rows()) {
    throw std::invalid_argument("transformer_block: latent_count exceeds sequence length");
  }

  // Self-attention over the whole fused sequence.
  LayerNormCache ln1;
  const Mat h1 = layer_norm(seq.tokens, cache ? &ln1 : nullptr);
  Mat q = h1 * p.wq;
  Mat k = h1 * p.wk;
  const Mat v = h1 * p.wv;
  rotate_heads(q, seq.positions, heads);
  rotate_heads(k, seq.positions, heads);
  AttentionCache self_cache;
  const Mat attn = multihead_attention(q, k, v, heads, cache ? &self_cache : nullptr);
  // Truncate: dense rows are dropped right after self-attention.
  Mat y = seq.tokens.topRows(S) + attn.topRows(S) * p.wo;

  // Cross-attention to the text embeddings.
  LayerNormCache ln2;
  Mat h2 = layer_norm(y, cache ? &ln2 : nullptr);
  AttentionCache cross_cache;
  const Mat cross =
      multihead_attention(h2 * p.cq, text * p.ck, text * p.cv, heads, cache ? &cross_cache : nullptr);
  y += cross * p.co;

  // Feed-forward.
  LayerNormCache ln3;
  Mat h3 = layer_norm(y, cache ? &ln3 : nullptr);
  Mat pre = (h3 * p.w1).rowwise() + p.b1;
  Mat act = pre.unaryExpr([](double x) { return gelu(x); });
  y += (act * p.w2).rowwise() + p.b2;

  if (cache) {
    cache->latent_count = seq.latent_count;
    cache->ln1 = std::move(ln1);
    cache->ln2 = std::move(ln2);
    cache->ln3 = std::move(ln3);
    cache->self_attn = std::move(self_cache);
    cache->cross_attn = std::move(cross_cache);
    cache->h2 = std::move(h2);
    cache->h3 = std::move(h3);
    cache->pre_act = std::move(pre);
    cache->act = std::move(act);
    cache->positions = seq.positions;
  }
  return y;
}

/// Gradient w.r.t. the latent input rows given the gradient of the block output.
inline Mat transformer_block_backward(const Mat& dy_out, const BlockCache& c, const BlockParams& p,
                                      std::size_t heads) {
  const auto S = static_cast<Eigen::Index>(c.latent_count);

  // Feed-forward.
  Mat dy = dy_out;
  Mat d_pre = (dy_out * p.w2.transpose()).array() *
              c.pre_act.unaryExpr([](double x) { return gelu_grad(x); }).array();
  dy += layer_norm_backward(d_pre * p.w1.transpose(), c.ln3);

  // Cross-attention: only the query path depends on the latent rows.
  const AttentionGrads cg =
      multihead_attention_backward(dy * p.co.transpose(), c.cross_attn, heads);
  dy += layer_norm_backward(cg.dq * p.cq.transpose(), c.ln2);

  // Self-attention over the fused sequence; dense rows receive no output gradient.
  const Eigen::Index n = c.self_attn.q.rows();
  Mat d_attn = Mat::Zero(n, p.wo.rows());
  d_attn.topRows(S) = dy * p.wo.transpose();
  AttentionGrads sg = multihead_attention_backward(d_attn, c.self_attn, heads);
  rotate_heads(sg.dq, c.positions, heads, /*inverse=*/true);
  rotate_heads(sg.dk, c.positions, heads, /*inverse=*/true);
  const Mat dh1 = sg.dq * p.wq.transpose() + sg.dk * p.wk.transpose() + sg.dv * p.wv.transpose();
  const Mat d_fused = layer_norm_backward(dh1, c.ln1);
  return dy + d_fused.topRows(S);
}

// ---------------------------------------------------------------------------
// Velocity prediction

/// Everything the backbone consumes besides the noisy latent and tau.
struct Conditioning {
  PositionalEncoding latent_positions;  // identity or geometry encoding, never both
  Mat text;                             // L x D_c
  DenseTokenGrid dense;                 // may hold zero tokens
};

/// Sinusoidal tau embedding of width `dim`, added to every token.
inline RowVec tau_embedding(double tau, std::size_t dim) {
  const std::size_t half = dim / 2;
  RowVec e = RowVec::Zero(static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < half; ++j) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
    const double arg = 1000.0 * tau * freq;
    e(static_cast<Eigen::Index>(j)) = std::cos(arg);
    e(static_cast<Eigen::Index>(half + j)) = std::sin(arg);
  }
  return e;
}

struct VelocityCache {
  std::vector<BlockCache> blocks;
  LayerNormCache ln_final;
};

namespace detail {

inline void check_conditioning(const Tensor4& x, const Conditioning& cond,
                               const BackboneParams& params) {
  const BackboneConfig& cfg = params.cfg;
  if (x.c != cfg.latent_channels) {
    throw std::invalid_argument("predict_velocity: latent has " + std::to_string(x.c) +
                                " channels, backbone expects " +
                                std::to_string(cfg.latent_channels));
  }
  const TokenGrid g = token_grid(x, cfg.patch);
  if (cond.latent_positions.rows != g.tokens() || cond.latent_positions.pairs != cfg.rope.pairs()) {
    throw std::invalid_argument("predict_velocity: latent positions do not cover the token grid");
  }
  if (static_cast<std::size_t>(cond.text.cols()) != cfg.text_dim || cond.text.rows() == 0) {
    throw std::invalid_argument("predict_velocity: text embeddings have wrong width");
  }
  if (cond.dense.count() > 0 && cond.dense.dim() != cfg.dense_dim) {
    throw std::invalid_argument("predict_velocity: dense token dim " +
                                std::to_string(cond.dense.dim()) + " != configured " +
                                std::to_string(cfg.dense_dim));
  }
}

}  // namespace detail

inline Tensor4 predict_velocity(const Tensor4& x, double tau, const Conditioning& cond,
                                const BackboneParams& params, VelocityCache* cache = nullptr) {
  const BackboneConfig& cfg = params.cfg;
  detail::check_conditioning(x, cond, params);
  if (cfg.zero_velocity) {
    return Tensor4(x.t, x.c, x.h, x.w);
  }
  Mat h = (patchify(x, cfg.patch) * params.w_in).rowwise() + params.b_in;
  h.rowwise() += tau_embedding(tau, cfg.model_dim);

  const Mat dense = cond.dense.count() > 0
                        ? Mat(cond.dense.tokens * params.adapter)
                        : Mat(0, static_cast<Eigen::Index>(cfg.model_dim));
  if (cache) cache->blocks.assign(params.blocks.size(), BlockCache{});
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const FusedSequence seq = fuse_tokens(h, cond.latent_positions, dense, cond.dense.positions);
    h = transformer_block(seq, cond.text, params.blocks[b], cfg.heads,
                          cache ? &cache->blocks[b] : nullptr);
  }
  const Mat out =
      (layer_norm(h, cache ? &cache->ln_final : nullptr) * params.w_out).rowwise() + params.b_out;
  return unpatchify(out, cfg.patch, x.t, x.c, x.h, x.w);
}

/// Vector-Jacobian product: gradient of sum(cotangent * v(x)) w.r.t. x.
inline Tensor4 velocity_vjp(const Tensor4& x, double tau, const Conditioning& cond,
                            const BackboneParams& params, const Tensor4& cotangent) {
  require_same_shape(x, cotangent, "velocity_vjp");
  const BackboneConfig& cfg = params.cfg;
  if (cfg.zero_velocity) {
    return Tensor4(x.t, x.c, x.h, x.w);
  }
  VelocityCache cache;
  predict_velocity(x, tau, cond, params, &cache);

  // patchify is the adjoint of unpatchify (both are permutations).
  const Mat d_out = patchify(cotangent, cfg.patch);
  Mat dh = layer_norm_backward(d_out * params.w_out.transpose(), cache.ln_final);
  for (std::size_t b = params.blocks.size(); b-- > 0;) {
    dh = transformer_block_backward(dh, cache.blocks[b], params.blocks[b], cfg.heads);
  }
  const Mat d_tokens = dh * params.w_in.transpose();
  return unpatchify(d_tokens, cfg.patch, x.t, x.c, x.h, x.w);
}

}  // namespace grouprope
