#pragma once

#include <filesystem>
#include <optional>

#include "holoslide/attention.hpp"
#include "holoslide/bitgrid.hpp"
#include "holoslide/foreground.hpp"
#include "holoslide/pyramid.hpp"
#include "holoslide/vq.hpp"

namespace holoslide {

enum class TokenizerKind { kVq, kLinear };

struct ModelConfig {
  std::uint32_t f = 16;               // patchify factor
  std::uint32_t d_z = 256;            // code dimension
  std::uint32_t codebook_size = 1024;
  std::uint32_t d_model = 256;
  std::uint32_t heads = 4;
  std::vector<std::uint32_t> scales{1, 2, 4};
  std::uint32_t blocks_stage1 = 2;
  std::uint32_t blocks_stage2 = 2;
  std::uint32_t classes = 1;
  std::uint32_t max_grid = 512;       // positional embedding capacity per axis
  double epsilon = 1e-6;              // attention denominator guard
  double beta_commit = 0.25;
  attn::AttentionKind attention = attn::AttentionKind::kRelu;
  TokenizerKind tokenizer = TokenizerKind::kVq;
  std::uint64_t seed = 0;

  void validate() const;
  attn::AttentionConfig stage_cfg(int stage) const {
    attn::AttentionConfig c;
    c.d_model = stage == 1 ? d_model : 2 * d_model;
    c.heads = heads;
    c.scales.assign(scales.begin(), scales.end());
    c.epsilon = epsilon;
    return c;
  }
};

struct TrainConfig {
  double lr = 3e-4;
  std::uint64_t steps = 0;
  std::uint32_t batch = 1;
  std::uint64_t seed = 0;
  double loss_mix = 0.5;  // lambda: weight of the dice term
  bool freeze_tokenizer = false;
  enum class Sampler { kRand, kTile } sampler = Sampler::kRand;
  double tile_min_fg = 0.01;  // foreground filter for the fixed tile grid
  std::uint32_t level = 0;    // pyramid level ROIs are read from
};

// The full segmentation network: tokenizer, two-stage backbone, decode head.
template <typename T>
class SegModel {
 public:
  explicit SegModel(const ModelConfig& cfg) : cfg_(cfg) { init_params(); }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return params_; }
  const ParamStore<T>& params() const { return params_; }

  std::uint64_t step_count = 0;

  template <typename Ctx>
  struct ForwardOut {
    typename Ctx::Ref probs;  // (H, W, classes)
    Tensor<std::int32_t> token_indices;
    std::size_t grid_h = 0, grid_w = 0;
  };

  // Single forward composition shared by training (tape) and inference (plain).
  template <typename Ctx>
  ForwardOut<Ctx> compose(Ctx& ctx, const RgbRaster& patch) const {
    using Ref = typename Ctx::Ref;
    std::size_t gh = 0, gw = 0;
    Tensor<T> cols = vq::im2col<T>(patch, cfg_.f, &gh, &gw);
    Ref cols_ref = ctx.constant(std::move(cols));
    Ref latent = ctx.add_bias(ctx.matmul(cols_ref, ctx.param("enc.w")), ctx.param("enc.b"));

    ForwardOut<Ctx> out;
    out.grid_h = gh;
    out.grid_w = gw;

    Ref features;
    if (cfg_.tokenizer == TokenizerKind::kVq) {
      auto q = ctx.vq_quantize_st(latent, ctx.param("codebook"), T(cfg_.beta_commit));
      out.token_indices = q.indices;
      features = ctx.embedding_tokens(ctx.param("embed"), q.indices, q.quantized);
    } else {
      features = latent;  // requires d_z == d_model, enforced by validate()
    }
    Ref x = ctx.add_pos2d(features, ctx.param("pos.row"), ctx.param("pos.col"), gh, gw);

    const attn::AttentionConfig cfg1 = cfg_.stage_cfg(1);
    for (std::uint32_t b = 0; b < cfg_.blocks_stage1; ++b) {
      auto refs = attn::BlockRefs<Ctx>::from_params(ctx, "stage1.block" + std::to_string(b));
      x = attn::attention_block<Ctx, T>(ctx, x, gh, gw, refs, cfg1, cfg_.attention);
      x = attn::ffn_block<Ctx, T>(ctx, x, refs);
    }

    const std::size_t h2 = (gh + 1) / 2, w2 = (gw + 1) / 2;
    Ref gathered = ctx.space_to_depth2(ctx.reshape(x, {gh, gw, std::size_t(cfg_.d_model)}));
    Ref x2 = ctx.add_bias(
        ctx.matmul(ctx.reshape(gathered, {h2 * w2, 4 * std::size_t(cfg_.d_model)}),
                   ctx.param("down.w")),
        ctx.param("down.b"));

    const attn::AttentionConfig cfg2 = cfg_.stage_cfg(2);
    for (std::uint32_t b = 0; b < cfg_.blocks_stage2; ++b) {
      auto refs = attn::BlockRefs<Ctx>::from_params(ctx, "stage2.block" + std::to_string(b));
      x2 = attn::attention_block<Ctx, T>(ctx, x2, h2, w2, refs, cfg2, cfg_.attention);
      x2 = attn::ffn_block<Ctx, T>(ctx, x2, refs);
    }

    Ref logits = ctx.add_bias(ctx.matmul(x2, ctx.param("head.w")), ctx.param("head.b"));
    Ref pixels = ctx.blocks_to_pixels(logits, h2, w2, 2 * cfg_.f, cfg_.classes);
    Ref cropped = ctx.crop2d(pixels, patch.height, patch.width);
    out.probs = ctx.sigmoid(cropped);
    return out;
  }

  // Forward with a small working set; returns (H, W, classes) probabilities.
  Tensor<T> forward_probs(const RgbRaster& patch) const {
    PlainCtx<T> ctx;
    ctx.params = &params_;
    auto out = compose(ctx, patch);
    return *out.probs;
  }

  // Backbone feature grid for a token grid, before the decode head; the
  // spec-level backbone operation, exposed for tests.
  Tensor<T> backbone_features(const Tensor<std::int32_t>& indices, std::size_t gh,
                              std::size_t gw) const {
    PlainCtx<T> ctx;
    ctx.params = &params_;
    using Ref = typename PlainCtx<T>::Ref;
    Ref features = ctx.embedding_tokens(ctx.param("embed"), indices, nullptr);
    Ref x = ctx.add_pos2d(features, ctx.param("pos.row"), ctx.param("pos.col"), gh, gw);
    const attn::AttentionConfig cfg1 = cfg_.stage_cfg(1);
    for (std::uint32_t b = 0; b < cfg_.blocks_stage1; ++b) {
      auto refs = attn::BlockRefs<PlainCtx<T>>::from_params(ctx, "stage1.block" + std::to_string(b));
      x = attn::attention_block<PlainCtx<T>, T>(ctx, x, gh, gw, refs, cfg1, cfg_.attention);
      x = attn::ffn_block<PlainCtx<T>, T>(ctx, x, refs);
    }
    const std::size_t h2 = (gh + 1) / 2, w2 = (gw + 1) / 2;
    Ref gathered = ctx.space_to_depth2(ctx.reshape(x, {gh, gw, std::size_t(cfg_.d_model)}));
    Ref x2 = ctx.add_bias(
        ctx.matmul(ctx.reshape(gathered, {h2 * w2, 4 * std::size_t(cfg_.d_model)}),
                   ctx.param("down.w")),
        ctx.param("down.b"));
    const attn::AttentionConfig cfg2 = cfg_.stage_cfg(2);
    for (std::uint32_t b = 0; b < cfg_.blocks_stage2; ++b) {
      auto refs = attn::BlockRefs<PlainCtx<T>>::from_params(ctx, "stage2.block" + std::to_string(b));
      x2 = attn::attention_block<PlainCtx<T>, T>(ctx, x2, h2, w2, refs, cfg2, cfg_.attention);
      x2 = attn::ffn_block<PlainCtx<T>, T>(ctx, x2, refs);
    }
    return ctx.v(x2).reshaped({h2, w2, 2 * std::size_t(cfg_.d_model)});
  }

 private:
  void init_params();

  ModelConfig cfg_;
  ParamStore<T> params_;
};

// Binary ground truth as a (H, W, classes) tensor from per-class grids.
template <typename T>
Tensor<T> gt_tensor(const std::vector<const BitGrid*>& per_class, std::uint64_t x0,
                    std::uint64_t y0, std::uint64_t w, std::uint64_t h) {
  Tensor<T> gt({h, w, per_class.size()});
  for (std::size_t c = 0; c < per_class.size(); ++c)
    for (std::uint64_t y = 0; y < h; ++y)
      for (std::uint64_t x = 0; x < w; ++x)
        gt.at(y, x, c) = per_class[c]->get(x0 + x, y0 + y) ? T(1) : T(0);
  return gt;
}

struct TrainSlide {
  PyramidImage image;
  std::vector<BitGrid> gt;  // one level-0 grid per class
};

struct TrainResult {
  std::uint64_t steps_completed = 0;
  bool diverged = false;
  std::vector<float> loss_log;
};

TrainResult train(SegModel<float>& model, const std::vector<TrainSlide>& slides,
                  const TrainConfig& tcfg, const SamplerConfig& scfg);

void save_checkpoint(const std::filesystem::path& path, const SegModel<float>& model);
SegModel<float> load_checkpoint(const std::filesystem::path& path);

namespace vq {

// Tokenizer sanity training: straight-through MSE reconstruction with the
// commitment pull; returns the per-epoch mean MSE log.
template <typename T>
std::vector<T> train_reconstruction(PatchEncoder<T>& enc, Codebook<T>& cb, PatchDecoder<T>& dec,
                                    const std::vector<RgbRaster>& images, std::size_t epochs,
                                    T lr);

}  // namespace vq

}  // namespace holoslide
