#include "holoslide/synth.hpp"

#include <cmath>

#include "holoslide/rng.hpp"

namespace holoslide {

namespace {

struct Ellipse {
  double cx, cy, ax, ay;
  bool contains(double x, double y, double margin = 0.0) const {
    const double ea = ax - margin, eb = ay - margin;
    if (ea <= 0.0 || eb <= 0.0) return false;
    const double dx = (x - cx) / ea, dy = (y - cy) / eb;
    return dx * dx + dy * dy <= 1.0;
  }
};

struct Disk {
  double cx, cy;
  std::uint64_t r;
};

}  // namespace

SynthSlide generate_synth(const SynthSlideSpec& spec) {
  if (spec.width < 512 || spec.height < 512)
    fail(Errc::InvalidInput, "synthetic slides must be at least 512x512");
  if (spec.disk_radius_min == 0 || spec.disk_radius_min > spec.disk_radius_max)
    fail(Errc::InvalidInput, "bad disk radius range");
  const CounterRng rng(spec.seed, stream_of("synth"));

  // large tissue ellipses, roughly centered thirds of the slide
  std::vector<Ellipse> tissue;
  const double w = double(spec.width), h = double(spec.height);
  for (std::uint32_t i = 0; i < std::max(1u, spec.tissue_blobs); ++i) {
    const std::uint64_t base = 1000 + 8 * i;
    Ellipse e;
    e.ax = w * (0.22 + 0.10 * rng.unit(base));
    e.ay = h * (0.22 + 0.10 * rng.unit(base + 1));
    e.cx = e.ax + rng.unit(base + 2) * (w - 2 * e.ax);
    e.cy = e.ay + rng.unit(base + 3) * (h - 2 * e.ay);
    tissue.push_back(e);
  }

  // disks fully inside some tissue ellipse, pairwise disjoint
  std::vector<Disk> disks;
  std::uint64_t counter = 100000;
  for (std::uint32_t i = 0; i < spec.disk_count; ++i) {
    bool placed = false;
    for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
      const std::uint64_t r = spec.disk_radius_min +
                              rng.below(counter++, spec.disk_radius_max - spec.disk_radius_min + 1);
      const double cx = rng.unit(counter++) * w;
      const double cy = rng.unit(counter++) * h;
      bool inside = false;
      for (const Ellipse& e : tissue)
        if (e.contains(cx, cy, double(r) + 2.0)) {
          inside = true;
          break;
        }
      if (!inside) continue;
      bool overlaps = false;
      for (const Disk& d : disks) {
        const double dx = cx - d.cx, dy = cy - d.cy;
        if (std::sqrt(dx * dx + dy * dy) < double(r + d.r) + 3.0) {
          overlaps = true;
          break;
        }
      }
      if (overlaps) continue;
      disks.push_back(Disk{cx, cy, r});
      placed = true;
    }
    if (!placed)
      fail(Errc::GenerationError,
           "could not place disk " + std::to_string(i) + " after bounded retries");
  }

  SynthSlide out;
  out.pixels = RgbRaster(spec.width, spec.height, spec.background_luminance);
  out.gt = BitGrid(spec.width, spec.height);

  for (const Ellipse& e : tissue) {
    const std::uint64_t y0 = std::uint64_t(std::max(0.0, e.cy - e.ay));
    const std::uint64_t y1 = std::min<std::uint64_t>(spec.height, std::uint64_t(e.cy + e.ay) + 1);
    const std::uint64_t x0 = std::uint64_t(std::max(0.0, e.cx - e.ax));
    const std::uint64_t x1 = std::min<std::uint64_t>(spec.width, std::uint64_t(e.cx + e.ax) + 1);
    for (std::uint64_t y = y0; y < y1; ++y)
      for (std::uint64_t x = x0; x < x1; ++x)
        if (e.contains(double(x), double(y))) {
          std::uint8_t* p = out.pixels.px(x, y);
          if (p[0] == spec.background_luminance)
            p[0] = p[1] = p[2] = spec.tissue_luminance;
        }
  }
  // exact tissue count after overlap resolution
  for (std::uint64_t y = 0; y < spec.height; ++y)
    for (std::uint64_t x = 0; x < spec.width; ++x)
      if (out.pixels.px(x, y)[0] != spec.background_luminance) ++out.tissue_pixels;

  for (const Disk& d : disks) {
    const std::uint64_t y0 = std::uint64_t(std::max(0.0, d.cy - double(d.r)));
    const std::uint64_t y1 = std::min<std::uint64_t>(spec.height, std::uint64_t(d.cy + double(d.r)) + 1);
    const std::uint64_t x0 = std::uint64_t(std::max(0.0, d.cx - double(d.r)));
    const std::uint64_t x1 = std::min<std::uint64_t>(spec.width, std::uint64_t(d.cx + double(d.r)) + 1);
    for (std::uint64_t y = y0; y < y1; ++y)
      for (std::uint64_t x = x0; x < x1; ++x) {
        const double dx = double(x) - d.cx, dy = double(y) - d.cy;
        if (dx * dx + dy * dy <= double(d.r) * double(d.r)) {
          std::uint8_t* p = out.pixels.px(x, y);
          p[0] = p[1] = p[2] = spec.target_luminance;
          out.gt.set(x, y, true);
          ++out.disk_pixels;
        }
      }
  }
  return out;
}

}  // namespace holoslide
