#include "holoslide/foreground.hpp"

#include <cmath>

#include "holoslide/kernels.hpp"

namespace holoslide {

OtsuResult otsu_threshold(const std::uint32_t hist[256]) {
  std::uint64_t total = 0, total_sum = 0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    total_sum += std::uint64_t(i) * hist[i];
  }
  OtsuResult res;
  if (total == 0) return res;

  // between-class variance up to the constant factor 1/total^2:
  //   (S*w_t - W*sum_t)^2 / (w_t * (W - w_t))
  // with the numerator difference kept exact in 128-bit.
  double best = 0.0;
  std::uint64_t w = 0, sum = 0;
  for (int t = 1; t <= 255; ++t) {
    w += hist[t - 1];
    sum += std::uint64_t(t - 1) * hist[t - 1];
    if (w == 0 || w == total) continue;
    const __int128 d = __int128(total_sum) * w - __int128(total) * sum;
    const double dd = double(d);
    const double var = dd * dd / (double(w) * double(total - w));
    if (var > best) {       // strict: ties keep the lowest threshold
      best = var;
      res.threshold = std::uint8_t(t);
    }
  }
  res.ok = best > 0.0;
  if (!res.ok) res.threshold = 0;
  return res;
}

ForegroundMask compute_foreground(const RgbRaster& level_pixels, std::uint32_t level) {
  const std::uint64_t w = level_pixels.width, h = level_pixels.height;
  std::uint32_t hist[256];
  kernels::luma_histogram_rgb8(level_pixels.pixels.data(), std::size_t(w) * h, hist);
  const OtsuResult otsu = otsu_threshold(hist);

  ForegroundMask mask;
  mask.level = level;
  mask.bits = BitGrid(w, h);
  mask.threshold_used = otsu.threshold;
  mask.degenerate = !otsu.ok;
  if (otsu.ok) {
    const std::uint8_t* px = level_pixels.pixels.data();
    for (std::uint64_t y = 0; y < h; ++y)
      for (std::uint64_t x = 0; x < w; ++x) {
        const std::uint8_t* p = px + (y * w + x) * 3;
        if (kernels::luma_rgb8(p[0], p[1], p[2]) < otsu.threshold) mask.bits.set(x, y, true);
      }
  }
  return mask;
}

ForegroundMask compute_foreground(const PyramidImage& img, std::uint32_t level) {
  const auto [w, h] = img.level_dims(level);
  return compute_foreground(img.read_region({level, 0, 0, w, h}), level);
}

RoiSampler::RoiSampler(const ForegroundMask& mask, const SamplerConfig& cfg)
    : mask_(&mask), cfg_(cfg) {
  if (cfg.roi_width == 0 || cfg.roi_height == 0)
    fail(Errc::InvalidInput, "roi dimensions must be positive");
  if (cfg.roi_width > mask.width() || cfg.roi_height > mask.height())
    fail(Errc::InvalidInput, "roi larger than the mask level");
  if (!(cfg.min_foreground_fraction > 0.0) || cfg.min_foreground_fraction > 1.0)
    fail(Errc::InvalidInput, "min_foreground_fraction must be in (0, 1]");
  nx_ = mask.width() - cfg.roi_width + 1;
  ny_ = mask.height() - cfg.roi_height + 1;
  const double area = double(cfg.roi_width) * double(cfg.roi_height);
  min_count_ = std::uint64_t(std::ceil(cfg.min_foreground_fraction * area - 1e-9));
  if (min_count_ == 0) min_count_ = 1;
}

bool RoiSampler::accepts(std::uint64_t ax, std::uint64_t ay) const {
  return mask_->bits.count_rect(ax, ay, cfg_.roi_width, cfg_.roi_height) >= min_count_;
}

TileRef RoiSampler::sample(std::uint64_t draw_index) const {
  const CounterRng rng(cfg_.seed, draw_index);
  for (std::uint64_t attempt = 0; attempt < kMaxRejectionDraws; ++attempt) {
    const std::uint64_t ax = rng.below(2 * attempt, nx_);
    const std::uint64_t ay = rng.below(2 * attempt + 1, ny_);
    if (accepts(ax, ay))
      return TileRef{mask_->level, ax, ay, cfg_.roi_width, cfg_.roi_height};
  }
  // completeness fallback: deterministic raster scan of every anchor
  for (std::uint64_t ay = 0; ay < ny_; ++ay)
    for (std::uint64_t ax = 0; ax < nx_; ++ax)
      if (accepts(ax, ay))
        return TileRef{mask_->level, ax, ay, cfg_.roi_width, cfg_.roi_height};
  fail(Errc::NoForeground, "no roi position satisfies the foreground fraction");
}

TileRef sample_roi(const ForegroundMask& mask, const SamplerConfig& cfg,
                   std::uint64_t draw_index) {
  return RoiSampler(mask, cfg).sample(draw_index);
}

namespace {

void axis_anchors(std::uint64_t extent, std::uint64_t tile, std::uint64_t stride,
                  std::vector<std::uint64_t>& out) {
  for (std::uint64_t a = 0;; a += stride) {
    if (a + tile >= extent) {
      out.push_back(extent - tile);
      break;
    }
    out.push_back(a);
  }
}

}  // namespace

std::vector<TileRef> tile_plan(std::uint32_t level, std::uint64_t level_width,
                               std::uint64_t level_height, std::uint64_t tile_w,
                               std::uint64_t tile_h, std::uint64_t overlap) {
  if (tile_w == 0 || tile_h == 0) fail(Errc::InvalidTiling, "tile dimensions must be positive");
  if (tile_w > level_width || tile_h > level_height)
    fail(Errc::InvalidTiling, "tile larger than the level extent");
  if (overlap >= std::min(tile_w, tile_h))
    fail(Errc::InvalidTiling, "overlap must be smaller than the tile");

  std::vector<std::uint64_t> xs, ys;
  axis_anchors(level_width, tile_w, tile_w - overlap, xs);
  axis_anchors(level_height, tile_h, tile_h - overlap, ys);

  std::vector<TileRef> plan;
  plan.reserve(xs.size() * ys.size());
  for (std::uint64_t y : ys)
    for (std::uint64_t x : xs) plan.push_back(TileRef{level, x, y, tile_w, tile_h});
  return plan;
}

std::vector<TileRef> foreground_tiles(const std::vector<TileRef>& plan,
                                      const ForegroundMask& mask, double min_fraction) {
  std::vector<TileRef> kept;
  kept.reserve(plan.size());
  for (const TileRef& t : plan) {
    std::uint64_t x0 = t.x, y0 = t.y, x1 = t.x + t.width, y1 = t.y + t.height;
    if (mask.level > t.level) {
      const std::uint32_t shift = mask.level - t.level;
      x0 >>= shift;
      y0 >>= shift;
      x1 = ceil_div(x1, 1ull << shift);
      y1 = ceil_div(y1, 1ull << shift);
    } else if (mask.level < t.level) {
      const std::uint32_t shift = t.level - mask.level;
      x0 <<= shift;
      y0 <<= shift;
      x1 <<= shift;
      y1 <<= shift;
    }
    x1 = std::min(x1, mask.width());
    y1 = std::min(y1, mask.height());
    if (x0 >= x1 || y0 >= y1) continue;
    const std::uint64_t area = (x1 - x0) * (y1 - y0);
    const std::uint64_t fg = mask.bits.count_rect(x0, y0, x1 - x0, y1 - y0);
    if (double(fg) >= min_fraction * double(area)) kept.push_back(t);
  }
  return kept;
}

}  // namespace holoslide
