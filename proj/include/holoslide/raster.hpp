#pragma once

#include <cstdint>
#include <vector>

#include "holoslide/common.hpp"

namespace holoslide {

// Dense RGB8 raster, row-major, 3 bytes per pixel.
struct RgbRaster {
  std::uint64_t width = 0;
  std::uint64_t height = 0;
  std::vector<std::uint8_t> pixels;

  RgbRaster() = default;
  RgbRaster(std::uint64_t w, std::uint64_t h, std::uint8_t fill = 0)
      : width(w), height(h), pixels(std::size_t(w) * h * 3, fill) {}

  std::uint8_t* px(std::uint64_t x, std::uint64_t y) { return pixels.data() + (y * width + x) * 3; }
  const std::uint8_t* px(std::uint64_t x, std::uint64_t y) const {
    return pixels.data() + (y * width + x) * 3;
  }

  void set(std::uint64_t x, std::uint64_t y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    std::uint8_t* p = px(x, y);
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }

  RgbRaster crop(std::uint64_t x, std::uint64_t y, std::uint64_t w, std::uint64_t h) const {
    if (x + w > width || y + h > height) fail(Errc::BoundsError, "crop outside raster");
    RgbRaster out(w, h);
    for (std::uint64_t row = 0; row < h; ++row) {
      const std::uint8_t* src = px(x, y + row);
      std::copy(src, src + w * 3, out.px(0, row));
    }
    return out;
  }

  bool operator==(const RgbRaster& o) const {
    return width == o.width && height == o.height && pixels == o.pixels;
  }
};

}  // namespace holoslide
