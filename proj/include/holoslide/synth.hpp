#pragma once

#include "holoslide/bitgrid.hpp"
#include "holoslide/raster.hpp"

namespace holoslide {

// Synthetic slide: bright background, darker tissue ellipses, and target
// disks placed fully inside tissue; the gt mask is exactly the disk union.
struct SynthSlideSpec {
  std::uint64_t width = 4096, height = 4096;
  std::uint32_t disk_count = 24;
  std::uint32_t disk_radius_min = 48, disk_radius_max = 128;
  std::uint8_t background_luminance = 245;
  std::uint8_t tissue_luminance = 140;
  std::uint8_t target_luminance = 90;
  std::uint32_t tissue_blobs = 2;
  std::uint64_t seed = 0;
};

struct SynthSlide {
  RgbRaster pixels;
  BitGrid gt;                      // target disks only
  std::uint64_t tissue_pixels = 0; // exact non-background count (incl. disks)
  std::uint64_t disk_pixels = 0;   // exact gt popcount, sum of per-disk counts
};

SynthSlide generate_synth(const SynthSlideSpec& spec);

}  // namespace holoslide
