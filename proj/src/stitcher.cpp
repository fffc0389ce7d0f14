#include "holoslide/stitcher.hpp"

#include <future>
#include <thread>

namespace holoslide {

ProbAccumulator::ProbAccumulator(std::uint64_t width, std::uint64_t height)
    : w_(width), h_(height), cx_(ceil_div(width, kChunk)), cy_(ceil_div(height, kChunk)),
      chunks_(cx_ * cy_) {}

ProbAccumulator::Chunk& ProbAccumulator::chunk_at(std::uint64_t cx, std::uint64_t cy) {
  auto& slot = chunks_[cy * cx_ + cx];
  if (!slot) {
    slot = std::make_unique<Chunk>();
    slot->sum.assign(kChunk * kChunk, 0.0);
    slot->count.assign(kChunk * kChunk, 0);
  }
  return *slot;
}

const ProbAccumulator::Chunk* ProbAccumulator::chunk_ptr(std::uint64_t cx,
                                                         std::uint64_t cy) const {
  return chunks_[cy * cx_ + cx].get();
}

void ProbAccumulator::add_tile(std::uint64_t x0, std::uint64_t y0, const Tensor<float>& tile) {
  const std::uint64_t th = tile.dim(0), tw = tile.dim(1);
  if (x0 + tw > w_ || y0 + th > h_) fail(Errc::BoundsError, "tile outside accumulator");
  for (std::uint64_t cy = y0 / kChunk; cy * kChunk < y0 + th; ++cy) {
    for (std::uint64_t cx = x0 / kChunk; cx * kChunk < x0 + tw; ++cx) {
      Chunk& ch = chunk_at(cx, cy);
      const std::uint64_t gx0 = std::max(x0, cx * kChunk);
      const std::uint64_t gy0 = std::max(y0, cy * kChunk);
      const std::uint64_t gx1 = std::min(x0 + tw, (cx + 1) * kChunk);
      const std::uint64_t gy1 = std::min(y0 + th, (cy + 1) * kChunk);
      for (std::uint64_t gy = gy0; gy < gy1; ++gy) {
        const float* src = tile.data() + (gy - y0) * tw + (gx0 - x0);
        double* sum = ch.sum.data() + (gy - cy * kChunk) * kChunk + (gx0 - cx * kChunk);
        std::uint32_t* cnt = ch.count.data() + (gy - cy * kChunk) * kChunk + (gx0 - cx * kChunk);
        for (std::uint64_t i = 0; i < gx1 - gx0; ++i) {
          sum[i] += double(src[i]);
          ++cnt[i];
        }
      }
    }
  }
}

void ProbAccumulator::add_zero_tile(std::uint64_t x0, std::uint64_t y0, std::uint64_t w,
                                    std::uint64_t h) {
  if (x0 + w > w_ || y0 + h > h_) fail(Errc::BoundsError, "tile outside accumulator");
  for (std::uint64_t cy = y0 / kChunk; cy * kChunk < y0 + h; ++cy) {
    for (std::uint64_t cx = x0 / kChunk; cx * kChunk < x0 + w; ++cx) {
      Chunk& ch = chunk_at(cx, cy);
      const std::uint64_t gx0 = std::max(x0, cx * kChunk);
      const std::uint64_t gy0 = std::max(y0, cy * kChunk);
      const std::uint64_t gx1 = std::min(x0 + w, (cx + 1) * kChunk);
      const std::uint64_t gy1 = std::min(y0 + h, (cy + 1) * kChunk);
      for (std::uint64_t gy = gy0; gy < gy1; ++gy) {
        std::uint32_t* cnt = ch.count.data() + (gy - cy * kChunk) * kChunk + (gx0 - cx * kChunk);
        for (std::uint64_t i = 0; i < gx1 - gx0; ++i) ++cnt[i];
      }
    }
  }
}

std::uint32_t ProbAccumulator::count_at(std::uint64_t x, std::uint64_t y) const {
  const Chunk* ch = chunk_ptr(x / kChunk, y / kChunk);
  if (!ch) return 0;
  return ch->count[(y % kChunk) * kChunk + (x % kChunk)];
}

double ProbAccumulator::mean_at(std::uint64_t x, std::uint64_t y) const {
  const Chunk* ch = chunk_ptr(x / kChunk, y / kChunk);
  if (!ch) return 0.0;
  const std::size_t i = std::size_t((y % kChunk) * kChunk + (x % kChunk));
  return ch->count[i] ? ch->sum[i] / ch->count[i] : 0.0;
}

BitGrid ProbAccumulator::threshold(double thr) const {
  BitGrid out(w_, h_);
  for (std::uint64_t cy = 0; cy < cy_; ++cy)
    for (std::uint64_t cx = 0; cx < cx_; ++cx) {
      const Chunk* ch = chunk_ptr(cx, cy);
      if (!ch) continue;
      const std::uint64_t x1 = std::min(w_, (cx + 1) * kChunk);
      const std::uint64_t y1 = std::min(h_, (cy + 1) * kChunk);
      for (std::uint64_t y = cy * kChunk; y < y1; ++y)
        for (std::uint64_t x = cx * kChunk; x < x1; ++x) {
          const std::size_t i = std::size_t((y % kChunk) * kChunk + (x % kChunk));
          if (ch->count[i] && ch->sum[i] / ch->count[i] >= thr) out.set(x, y, true);
        }
    }
  return out;
}

std::vector<WsiMask> infer_wsi(const PyramidImage& img, std::uint32_t level,
                               const TileModel& model, const InferConfig& cfg) {
  const auto [lw, lh] = img.level_dims(level);
  const std::uint32_t fg_level =
      cfg.fg_level == std::uint32_t(-1) ? level : cfg.fg_level;
  const ForegroundMask fg = compute_foreground(img, fg_level);
  const std::vector<TileRef> plan =
      tile_plan(level, lw, lh, std::min(cfg.tile_w, lw), std::min(cfg.tile_h, lh), cfg.overlap);
  const std::vector<TileRef> fg_tiles = foreground_tiles(plan, fg, cfg.min_fg_fraction);

  std::vector<bool> run(plan.size(), false);
  {
    std::size_t j = 0;
    for (std::size_t i = 0; i < plan.size() && j < fg_tiles.size(); ++i)
      if (plan[i] == fg_tiles[j]) {
        run[i] = true;
        ++j;
      }
  }

  std::vector<ProbAccumulator> acc;
  acc.reserve(cfg.classes);
  for (std::uint32_t c = 0; c < cfg.classes; ++c) acc.emplace_back(lw, lh);

  const std::uint32_t workers = std::max(1u, cfg.workers);
  // Workers compute ahead inside a bounded window; accumulation stays in
  // plan order so results are independent of scheduling.
  const std::size_t window = std::size_t(workers) * 2;
  std::vector<std::future<Tensor<float>>> pending(plan.size());
  std::size_t launched = 0;

  auto launch_until = [&](std::size_t bound) {
    for (; launched < bound && launched < plan.size(); ++launched) {
      if (!run[launched]) continue;
      const TileRef t = plan[launched];
      pending[launched] = std::async(
          workers == 1 ? std::launch::deferred : std::launch::async, [&img, t, &model]() {
            RgbRaster pixels = img.read_region({t.level, t.x, t.y, t.width, t.height});
            return model(pixels);
          });
    }
  };

  for (std::size_t i = 0; i < plan.size(); ++i) {
    launch_until(i + window);
    const TileRef& t = plan[i];
    if (!run[i]) {
      for (auto& a : acc) a.add_zero_tile(t.x, t.y, t.width, t.height);
      continue;
    }
    Tensor<float> probs = pending[i].get();  // worker exceptions propagate here
    pending[i] = {};
    if (probs.rank() != 3 || probs.dim(0) != t.height || probs.dim(1) != t.width ||
        probs.dim(2) != cfg.classes)
      fail(Errc::ShapeError, "model output does not match the tile");
    for (std::uint32_t c = 0; c < cfg.classes; ++c) {
      Tensor<float> plane({t.height, t.width});
      for (std::uint64_t y = 0; y < t.height; ++y)
        for (std::uint64_t x = 0; x < t.width; ++x)
          plane.at(y, x) = probs.at(y, x, c);
      acc[c].add_tile(t.x, t.y, plane);
    }
  }

  std::vector<WsiMask> out;
  out.reserve(cfg.classes);
  for (std::uint32_t c = 0; c < cfg.classes; ++c)
    out.push_back(WsiMask{level, acc[c].threshold(cfg.threshold)});
  return out;
}

RgbRaster export_overlay(const PyramidImage& img, const WsiMask& mask, std::uint32_t out_level) {
  if (out_level < mask.level || out_level >= img.level_count())
    fail(Errc::BoundsError, "overlay level must be >= mask level and exist");
  const auto [lw, lh] = img.level_dims(out_level);
  if (mask.width() != img.level_dims(mask.level).first ||
      mask.height() != img.level_dims(mask.level).second)
    fail(Errc::BoundsError, "mask dims do not match its level");
  RgbRaster out = img.read_region({out_level, 0, 0, lw, lh});
  const BitGrid reduced = mask.bits.or_downsample(out_level - mask.level);
  // 50% green tint on mask pixels
  for (std::uint64_t y = 0; y < lh; ++y)
    for (std::uint64_t x = 0; x < lw; ++x) {
      if (!reduced.get(x, y)) continue;
      std::uint8_t* p = out.px(x, y);
      p[0] = std::uint8_t(p[0] / 2);
      p[1] = std::uint8_t((p[1] + 255 + 1) / 2);
      p[2] = std::uint8_t(p[2] / 2);
    }
  return out;
}

}  // namespace holoslide
