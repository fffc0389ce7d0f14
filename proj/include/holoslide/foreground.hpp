#pragma once

#include <cstdint>
#include <vector>

#include "holoslide/bitgrid.hpp"
#include "holoslide/pyramid.hpp"
#include "holoslide/rng.hpp"

namespace holoslide {

struct ForegroundMask {
  std::uint32_t level = 0;
  BitGrid bits;
  std::uint8_t threshold_used = 0;
  // No class separation existed (uniform histogram); mask is all background.
  bool degenerate = false;

  std::uint64_t width() const { return bits.width(); }
  std::uint64_t height() const { return bits.height(); }
};

struct TileRef {
  std::uint32_t level = 0;
  std::uint64_t x = 0, y = 0;
  std::uint64_t width = 0, height = 0;

  bool operator==(const TileRef& o) const {
    return level == o.level && x == o.x && y == o.y && width == o.width && height == o.height;
  }
};

struct SamplerConfig {
  std::uint64_t roi_width = 3840;
  std::uint64_t roi_height = 2160;
  double min_foreground_fraction = 0.5;
  std::uint64_t seed = 0;
};

// Otsu threshold over a 256-bin histogram: the t in [1,255] splitting classes
// [0,t) / [t,255] with maximal between-class variance; ties break to the
// lowest t. Returns threshold 0 with ok=false when no split separates
// anything (uniform histogram).
struct OtsuResult {
  std::uint8_t threshold = 0;
  bool ok = false;
};
OtsuResult otsu_threshold(const std::uint32_t hist[256]);

// Thresholds the level's luminance; tissue (darker than the slide background)
// is foreground, i.e. pixels strictly below the Otsu threshold.
ForegroundMask compute_foreground(const PyramidImage& img, std::uint32_t level);
ForegroundMask compute_foreground(const RgbRaster& level_pixels, std::uint32_t level);

// Uniform rejection sampler over ROI anchors whose foreground fraction meets
// the configured minimum. Each draw index is an independent stream: up to
// 10,000 rejection attempts, then a deterministic raster scan of every anchor
// before declaring NoForeground. Keeps a pointer to the mask; the mask must
// outlive the sampler.
class RoiSampler {
 public:
  RoiSampler(const ForegroundMask& mask, const SamplerConfig& cfg);
  TileRef sample(std::uint64_t draw_index) const;

  static constexpr std::uint64_t kMaxRejectionDraws = 10000;

 private:
  bool accepts(std::uint64_t ax, std::uint64_t ay) const;

  const ForegroundMask* mask_;
  SamplerConfig cfg_;
  std::uint64_t nx_ = 0, ny_ = 0;  // anchor counts per axis
  std::uint64_t min_count_ = 0;    // accepted iff rect popcount >= min_count_
};

TileRef sample_roi(const ForegroundMask& mask, const SamplerConfig& cfg,
                   std::uint64_t draw_index);

// Row-major tile anchors with stride tile-overlap; the final anchor per axis
// clamps to extent-tile so coverage is exact and no tile leaves bounds.
std::vector<TileRef> tile_plan(std::uint32_t level, std::uint64_t level_width,
                               std::uint64_t level_height, std::uint64_t tile_w,
                               std::uint64_t tile_h, std::uint64_t overlap);

// Keeps tiles whose foreground fraction is >= min_fraction, preserving order.
// The mask may live at a coarser level than the tiles.
std::vector<TileRef> foreground_tiles(const std::vector<TileRef>& plan,
                                      const ForegroundMask& mask, double min_fraction);

}  // namespace holoslide
