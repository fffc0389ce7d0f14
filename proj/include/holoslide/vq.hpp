#pragma once

#include "holoslide/raster.hpp"
#include "holoslide/rng.hpp"
#include "holoslide/tensor.hpp"

// Sequence tokenization: a linear patchify encoder over f x f pixel blocks,
// per-cell nearest-entry quantization against a trainable codebook, and a
// linear per-token decoder used for tokenizer reconstruction training.
namespace holoslide::vq {

template <typename T>
struct PatchEncoder {
  std::uint32_t f = 16;           // patchify factor
  Tensor<T> weight;               // (f*f*3, d_z)
  Tensor<T> bias;                 // (d_z)
  std::uint32_t d_z() const { return std::uint32_t(bias.size()); }
};

template <typename T>
struct Codebook {
  Tensor<T> entries;  // (K, d_z)
  std::uint64_t seed = 0;
  std::size_t size() const { return entries.dim(0); }
  std::size_t dim() const { return entries.dim(1); }
};

// Latent grid (h', w', d_z) plus its provenance dims.
template <typename T>
struct LatentGrid {
  std::size_t h = 0, w = 0;
  Tensor<T> values;  // (h*w, d_z)
};

template <typename T>
struct TokenGrid {
  std::size_t h = 0, w = 0;
  Tensor<std::int32_t> indices;  // (h*w), values in [0, K)
  Tensor<T> quantized;           // (h*w, d_z), rows are exact codebook entries
};

template <typename T>
PatchEncoder<T> make_encoder(std::uint32_t f, std::uint32_t d_z, std::uint64_t seed) {
  PatchEncoder<T> enc;
  enc.f = f;
  const std::size_t fan_in = std::size_t(f) * f * 3;
  enc.weight = Tensor<T>({fan_in, d_z});
  enc.bias = Tensor<T>({d_z});
  const CounterRng rng(seed, stream_of("vq.encoder"));
  const T sd = std::sqrt(T(2) / T(fan_in));
  for (std::size_t i = 0; i < enc.weight.size(); ++i)
    enc.weight[i] = T(rng.normal(i)) * sd;
  return enc;
}

template <typename T>
Codebook<T> make_codebook(std::uint32_t count, std::uint32_t d_z, std::uint64_t seed) {
  if (count < 2) fail(Errc::InvalidCodebook, "codebook needs at least 2 entries");
  Codebook<T> cb;
  cb.seed = seed;
  cb.entries = Tensor<T>({count, d_z});
  const CounterRng rng(seed, stream_of("vq.codebook"));
  const T bound = T(1) / std::sqrt(T(d_z));
  for (std::size_t i = 0; i < cb.entries.size(); ++i)
    cb.entries[i] = T(2.0 * rng.unit(i) - 1.0) * bound;
  return cb;
}

// Decoder weights for reconstruction: (d_z, f*f*3) plus bias.
template <typename T>
struct PatchDecoder {
  std::uint32_t f = 16;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
PatchDecoder<T> make_decoder(std::uint32_t f, std::uint32_t d_z, std::uint64_t seed) {
  PatchDecoder<T> dec;
  dec.f = f;
  dec.weight = Tensor<T>({d_z, std::size_t(f) * f * 3});
  dec.bias = Tensor<T>({std::size_t(f) * f * 3});
  const CounterRng rng(seed, stream_of("vq.decoder"));
  const T sd = std::sqrt(T(2) / T(d_z));
  for (std::size_t i = 0; i < dec.weight.size(); ++i)
    dec.weight[i] = T(rng.normal(i)) * sd;
  return dec;
}

// Pixels in [0,1], symmetric reflect-padded up to multiples of f, unrolled to
// one row of f*f*3 values per token cell (py, px, channel order).
template <typename T>
Tensor<T> im2col(const RgbRaster& img, std::uint32_t f, std::size_t* h_out, std::size_t* w_out) {
  if (img.width < f || img.height < f)
    fail(Errc::InvalidInput, "patch smaller than the patchify factor");
  const std::size_t h = (img.height + f - 1) / f;
  const std::size_t w = (img.width + f - 1) / f;
  const std::size_t ph = h * f, pw = w * f;
  Tensor<T> cols({h * w, std::size_t(f) * f * 3});
  const T inv255 = T(1) / T(255);
  for (std::size_t cy = 0; cy < h; ++cy)
    for (std::size_t cx = 0; cx < w; ++cx) {
      T* row = cols.data() + (cy * w + cx) * f * f * 3;
      for (std::uint32_t py = 0; py < f; ++py) {
        std::size_t sy = cy * f + py;
        if (sy >= img.height) sy = img.height - 1 - (sy - img.height);  // reflect
        for (std::uint32_t px = 0; px < f; ++px) {
          std::size_t sx = cx * f + px;
          if (sx >= img.width) sx = img.width - 1 - (sx - img.width);
          const std::uint8_t* p = img.px(sx, sy);
          T* dst = row + (py * f + px) * 3;
          dst[0] = T(p[0]) * inv255;
          dst[1] = T(p[1]) * inv255;
          dst[2] = T(p[2]) * inv255;
        }
      }
    }
  (void)pw;
  (void)ph;
  if (h_out) *h_out = h;
  if (w_out) *w_out = w;
  return cols;
}

template <typename T>
LatentGrid<T> encode(const RgbRaster& img, const PatchEncoder<T>& enc) {
  if (!enc.weight.all_finite() || !enc.bias.all_finite())
    fail(Errc::NumericalError, "non-finite encoder weights");
  LatentGrid<T> out;
  Tensor<T> cols = im2col<T>(img, enc.f, &out.h, &out.w);
  Tensor<T> z({out.h * out.w, enc.bias.size()});
  num::gemm_nn(cols.data(), enc.weight.data(), z.data(), cols.dim(0), cols.dim(1),
               enc.bias.size());
  for (std::size_t i = 0; i < z.dim(0); ++i)
    num::axpy(T(1), enc.bias.data(), z.data() + i * z.dim(1), z.dim(1));
  out.values = std::move(z);
  return out;
}

// Nearest codebook entry by Euclidean distance; ties break to the lowest
// index. Returns the achieved distance (not squared).
template <typename T>
std::pair<std::size_t, T> nearest_code(const T* v, const Codebook<T>& cb) {
  if (cb.entries.size() == 0) fail(Errc::InvalidCodebook, "empty codebook");
  std::size_t best;
  T d2;
  num::nearest_code(v, cb.entries.data(), cb.size(), cb.dim(), &best, &d2);
  return {best, std::sqrt(d2)};
}

template <typename T>
TokenGrid<T> quantize(const LatentGrid<T>& z, const Codebook<T>& cb) {
  if (z.values.dim(1) != cb.dim()) fail(Errc::ShapeError, "latent/codebook dimension mismatch");
  TokenGrid<T> t;
  t.h = z.h;
  t.w = z.w;
  const std::size_t n = z.values.dim(0), d = cb.dim();
  t.indices = Tensor<std::int32_t>({n});
  t.quantized = Tensor<T>({n, d});
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best;
    T d2;
    num::nearest_code(z.values.data() + i * d, cb.entries.data(), cb.size(), d, &best, &d2);
    t.indices[i] = std::int32_t(best);
    std::copy_n(cb.entries.data() + best * d, d, t.quantized.data() + i * d);
  }
  return t;
}

// Per-token linear expansion back to pixel space; returns (H, W, 3) values.
template <typename T>
Tensor<T> reconstruct(const TokenGrid<T>& t, const PatchDecoder<T>& dec) {
  const std::size_t n = t.quantized.dim(0);
  if (n != t.h * t.w || t.quantized.dim(1) != dec.weight.dim(0))
    fail(Errc::ShapeError, "token grid and decoder disagree");
  Tensor<T> blocks({n, dec.weight.dim(1)});
  num::gemm_nn(t.quantized.data(), dec.weight.data(), blocks.data(), n, dec.weight.dim(0),
               dec.weight.dim(1));
  for (std::size_t i = 0; i < n; ++i)
    num::axpy(T(1), dec.bias.data(), blocks.data() + i * dec.bias.size(), dec.bias.size());
  return nn::blocks_to_pixels(blocks, t.h, t.w, dec.f, 3);
}

// Straight-through gradients: the upstream gradient on z_q passes to the
// latent unchanged; assigned codebook rows accumulate the commitment pull so
// a descent step moves them toward their latents.
template <typename T>
struct StraightThroughGrads {
  Tensor<T> latent_grad;    // same shape as the latent values
  Tensor<T> codebook_grad;  // (K, d_z)
};

template <typename T>
StraightThroughGrads<T> straight_through_grad(const LatentGrid<T>& z, const TokenGrid<T>& t,
                                              const Codebook<T>& cb, const Tensor<T>& upstream,
                                              T beta = T(0.25)) {
  if (!upstream.same_shape(z.values)) fail(Errc::ShapeError, "upstream shape mismatch");
  StraightThroughGrads<T> g;
  g.latent_grad = upstream;
  g.codebook_grad = Tensor<T>({cb.size(), cb.dim()});
  const std::size_t n = z.values.dim(0), d = cb.dim();
  for (std::size_t i = 0; i < n; ++i) {
    T* row = g.codebook_grad.data() + std::size_t(t.indices[i]) * d;
    for (std::size_t j = 0; j < d; ++j)
      row[j] += beta * (t.quantized[i * d + j] - z.values[i * d + j]);
  }
  return g;
}

}  // namespace holoslide::vq
