#pragma once

#include "holoslide/graph.hpp"
#include "holoslide/rng.hpp"

namespace holoslide::attn {

struct AttentionConfig {
  std::size_t d_model = 256;
  std::size_t heads = 4;
  std::vector<std::size_t> scales{1, 2, 4};
  double epsilon = 1e-6;

  void validate() const {
    if (d_model == 0 || heads == 0 || d_model % heads != 0)
      fail(Errc::ConfigError, "d_model must be divisible by heads");
    if (scales.empty()) fail(Errc::ConfigError, "scales must be nonempty");
    for (std::size_t s : scales)
      if (s == 0) fail(Errc::ConfigError, "scales must be >= 1");
  }
};

// All tensors of one transformer block (either attention flavor).
template <typename T>
struct AttentionBlockParams {
  Tensor<T> wq, wk, wv, wo;                        // (d, d)
  Tensor<T> scale_w;                               // (S) fusion weights, init 1/S
  Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;            // (d)
  Tensor<T> ffn_w1, ffn_b1, ffn_w2, ffn_b2;        // (d,4d)/(4d)/(4d,d)/(d)
};

template <typename T>
AttentionBlockParams<T> make_block(const AttentionConfig& cfg, std::size_t d,
                                   std::uint64_t seed, const std::string& name) {
  AttentionBlockParams<T> p;
  const std::size_t hidden = 4 * d;
  auto init = [&](Tensor<T>& t, std::vector<std::size_t> shape, const char* suffix,
                  std::size_t fan_in) {
    t = Tensor<T>(std::move(shape));
    const CounterRng rng(seed, stream_of((name + "." + suffix).c_str()));
    const T sd = std::sqrt(T(2) / T(fan_in));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = T(rng.normal(i)) * sd;
  };
  init(p.wq, {d, d}, "wq", d);
  init(p.wk, {d, d}, "wk", d);
  init(p.wv, {d, d}, "wv", d);
  init(p.wo, {d, d}, "wo", d);
  p.scale_w = Tensor<T>({cfg.scales.size()}, T(1) / T(cfg.scales.size()));
  p.ln1_g = Tensor<T>({d}, T(1));
  p.ln1_b = Tensor<T>({d});
  p.ln2_g = Tensor<T>({d}, T(1));
  p.ln2_b = Tensor<T>({d});
  init(p.ffn_w1, {d, hidden}, "ffn_w1", d);
  p.ffn_b1 = Tensor<T>({hidden});
  init(p.ffn_w2, {hidden, d}, "ffn_w2", hidden);
  p.ffn_b2 = Tensor<T>({d});
  return p;
}

// Context-ref view of a block, from either a parameter store or constants.
template <typename Ctx>
struct BlockRefs {
  using Ref = typename Ctx::Ref;
  Ref wq, wk, wv, wo, scale_w, ln1_g, ln1_b, ln2_g, ln2_b, ffn_w1, ffn_b1, ffn_w2, ffn_b2;

  static BlockRefs from_params(Ctx& ctx, const std::string& prefix) {
    return BlockRefs{ctx.param(prefix + ".wq"),     ctx.param(prefix + ".wk"),
                     ctx.param(prefix + ".wv"),     ctx.param(prefix + ".wo"),
                     ctx.param(prefix + ".scale_w"), ctx.param(prefix + ".ln1_g"),
                     ctx.param(prefix + ".ln1_b"),  ctx.param(prefix + ".ln2_g"),
                     ctx.param(prefix + ".ln2_b"),  ctx.param(prefix + ".ffn_w1"),
                     ctx.param(prefix + ".ffn_b1"), ctx.param(prefix + ".ffn_w2"),
                     ctx.param(prefix + ".ffn_b2")};
  }
  template <typename T>
  static BlockRefs from_tensors(Ctx& ctx, const AttentionBlockParams<T>& p) {
    return BlockRefs{ctx.constant(p.wq),     ctx.constant(p.wk),    ctx.constant(p.wv),
                     ctx.constant(p.wo),     ctx.constant(p.scale_w), ctx.constant(p.ln1_g),
                     ctx.constant(p.ln1_b),  ctx.constant(p.ln2_g), ctx.constant(p.ln2_b),
                     ctx.constant(p.ffn_w1), ctx.constant(p.ffn_b1), ctx.constant(p.ffn_w2),
                     ctx.constant(p.ffn_b2)};
  }
};

enum class AttentionKind { kRelu, kMhsa };

// Pre-norm residual attention block over an (h*w, d) token matrix. Per head
// the projected grid is pooled at every scale, attended, upsampled back and
// fused with the learned per-scale weights; heads concatenate into Wo.
template <typename Ctx, typename T>
typename Ctx::Ref attention_block(Ctx& ctx, typename Ctx::Ref x, std::size_t h, std::size_t w,
                                  const BlockRefs<Ctx>& p, const AttentionConfig& cfg,
                                  AttentionKind kind) {
  using Ref = typename Ctx::Ref;
  const std::size_t d = cfg.d_model;
  const std::size_t dh = d / cfg.heads;
  for (std::size_t s : cfg.scales)
    if (kind == AttentionKind::kRelu && (s > h || s > w))
      fail(Errc::ConfigError, "attention scale exceeds grid dims");

  Ref ln = ctx.layer_norm(x, p.ln1_g, p.ln1_b);
  Ref q = ctx.matmul(ln, p.wq);
  Ref k = ctx.matmul(ln, p.wk);
  Ref v = ctx.matmul(ln, p.wv);

  std::vector<Ref> head_outs;
  head_outs.reserve(cfg.heads);
  for (std::size_t hd = 0; hd < cfg.heads; ++hd) {
    Ref qh = ctx.col_slice(q, hd * dh, (hd + 1) * dh);
    Ref kh = ctx.col_slice(k, hd * dh, (hd + 1) * dh);
    Ref vh = ctx.col_slice(v, hd * dh, (hd + 1) * dh);
    if (kind == AttentionKind::kMhsa) {
      head_outs.push_back(ctx.softmax_attention(qh, kh, vh));
      continue;
    }
    std::vector<Ref> scale_outs;
    scale_outs.reserve(cfg.scales.size());
    for (std::size_t s : cfg.scales) {
      Ref qs = qh, ks = kh, vs = vh;
      std::size_t hs = h, ws = w;
      if (s > 1) {
        qs = ctx.reshape(ctx.avg_pool2d(ctx.reshape(qh, {h, w, dh}), s),
                         {nn::pooled_extent(h, s) * nn::pooled_extent(w, s), dh});
        ks = ctx.reshape(ctx.avg_pool2d(ctx.reshape(kh, {h, w, dh}), s),
                         {nn::pooled_extent(h, s) * nn::pooled_extent(w, s), dh});
        vs = ctx.reshape(ctx.avg_pool2d(ctx.reshape(vh, {h, w, dh}), s),
                         {nn::pooled_extent(h, s) * nn::pooled_extent(w, s), dh});
        hs = nn::pooled_extent(h, s);
        ws = nn::pooled_extent(w, s);
      }
      Ref att = ctx.relu_attention(qs, ks, vs, T(cfg.epsilon));
      if (s > 1) {
        att = ctx.reshape(ctx.upsample_nearest(ctx.reshape(att, {hs, ws, dh}), s, h, w),
                          {h * w, dh});
      }
      scale_outs.push_back(att);
    }
    head_outs.push_back(scale_outs.size() == 1
                            ? scale_outs[0]
                            : ctx.weighted_sum(scale_outs, p.scale_w));
  }
  Ref merged = cfg.heads == 1 ? head_outs[0] : ctx.concat_cols(head_outs);
  // single-scale relu attention keeps the fusion weight so the scale_w
  // parameter participates uniformly
  if (kind == AttentionKind::kRelu && cfg.scales.size() == 1)
    merged = ctx.weighted_sum({merged}, p.scale_w);
  Ref out = ctx.matmul(merged, p.wo);
  return ctx.add(x, out);
}

// Pre-norm residual two-layer MLP with ReLU.
template <typename Ctx, typename T>
typename Ctx::Ref ffn_block(Ctx& ctx, typename Ctx::Ref x, const BlockRefs<Ctx>& p) {
  using Ref = typename Ctx::Ref;
  Ref ln = ctx.layer_norm(x, p.ln2_g, p.ln2_b);
  Ref hmid = ctx.relu(ctx.add_bias(ctx.matmul(ln, p.ffn_w1), p.ffn_b1));
  Ref out = ctx.add_bias(ctx.matmul(hmid, p.ffn_w2), p.ffn_b2);
  return ctx.add(x, out);
}

// --- plain-tensor forms of the module operations ---

template <typename T>
Tensor<T> relu_linear_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                                T eps) {
  return nn::relu_linear_attention(q, k, v, eps, nullptr);
}

template <typename T>
Tensor<T> multi_scale_attention(const Tensor<T>& tokens, const AttentionBlockParams<T>& params,
                                const AttentionConfig& cfg,
                                AttentionKind kind = AttentionKind::kRelu) {
  if (tokens.rank() != 3 || tokens.dim(2) != cfg.d_model)
    fail(Errc::ShapeError, "tokens must be (h, w, d_model)");
  cfg.validate();
  const std::size_t h = tokens.dim(0), w = tokens.dim(1);
  PlainCtx<T> ctx;
  auto x = ctx.constant(tokens.reshaped({h * w, cfg.d_model}));
  auto refs = BlockRefs<PlainCtx<T>>::from_tensors(ctx, params);
  auto out = attention_block<PlainCtx<T>, T>(ctx, x, h, w, refs, cfg, kind);
  return ctx.v(out).reshaped({h, w, cfg.d_model});
}

template <typename T>
Tensor<T> ffn(const Tensor<T>& tokens, const AttentionBlockParams<T>& params,
              const AttentionConfig& cfg) {
  const std::size_t h = tokens.dim(0), w = tokens.dim(1);
  PlainCtx<T> ctx;
  auto x = ctx.constant(tokens.reshaped({h * w, cfg.d_model}));
  auto refs = BlockRefs<PlainCtx<T>>::from_tensors(ctx, params);
  auto out = ffn_block<PlainCtx<T>, T>(ctx, x, refs);
  return ctx.v(out).reshaped({h, w, cfg.d_model});
}

}  // namespace holoslide::attn
