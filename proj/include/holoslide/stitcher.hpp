#pragma once

#include <functional>

#include "holoslide/bitgrid.hpp"
#include "holoslide/foreground.hpp"
#include "holoslide/pyramid.hpp"
#include "holoslide/tensor.hpp"

namespace holoslide {

// Full-level binary segmentation result.
struct WsiMask {
  std::uint32_t level = 0;
  BitGrid bits;

  std::uint64_t width() const { return bits.width(); }
  std::uint64_t height() const { return bits.height(); }
};

// Per-pixel probability sums and contribution counts, chunked so a sparsely
// tiled gigapixel level does not allocate the whole plane. Chunks are 512^2
// and appear on first touch.
class ProbAccumulator {
 public:
  ProbAccumulator(std::uint64_t width, std::uint64_t height);

  // Adds a tile of probabilities at (x0, y0); tile is (h, w) row-major.
  void add_tile(std::uint64_t x0, std::uint64_t y0, const Tensor<float>& tile);
  // Counts coverage without contributing probability (skipped tiles).
  void add_zero_tile(std::uint64_t x0, std::uint64_t y0, std::uint64_t w, std::uint64_t h);

  std::uint32_t count_at(std::uint64_t x, std::uint64_t y) const;
  double mean_at(std::uint64_t x, std::uint64_t y) const;
  BitGrid threshold(double thr) const;
  std::uint64_t width() const { return w_; }
  std::uint64_t height() const { return h_; }

  static constexpr std::uint64_t kChunk = 512;

 private:
  struct Chunk {
    std::vector<double> sum;
    std::vector<std::uint32_t> count;
  };
  Chunk& chunk_at(std::uint64_t cx, std::uint64_t cy);
  const Chunk* chunk_ptr(std::uint64_t cx, std::uint64_t cy) const;

  std::uint64_t w_ = 0, h_ = 0, cx_ = 0, cy_ = 0;
  std::vector<std::unique_ptr<Chunk>> chunks_;
};

// Model adapter: probabilities (H, W, classes) in [0,1] for an RGB tile.
using TileModel = std::function<Tensor<float>(const RgbRaster&)>;

struct InferConfig {
  std::uint64_t tile_w = 3840, tile_h = 2160;
  std::uint64_t overlap = 0;
  double min_fg_fraction = 0.01;  // tiles below this skip inference
  double threshold = 0.5;
  std::uint32_t fg_level = std::uint32_t(-1);  // mask level; default = inference level
  std::uint32_t workers = 1;
  std::uint32_t classes = 1;
};

// Plans tiles over the level, runs the model on foreground tiles (skipped
// tiles contribute probability zero), averages overlaps per pixel and
// thresholds. Deterministic and independent of worker count: accumulation
// happens in tile-plan order.
std::vector<WsiMask> infer_wsi(const PyramidImage& img, std::uint32_t level,
                               const TileModel& model, const InferConfig& cfg);

// Tints mask pixels over the downsampled slide at out_level. The mask is
// block-OR reduced when out_level is coarser than mask.level.
RgbRaster export_overlay(const PyramidImage& img, const WsiMask& mask, std::uint32_t out_level);

}  // namespace holoslide
