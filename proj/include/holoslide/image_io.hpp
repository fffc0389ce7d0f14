#pragma once

#include <filesystem>

#include "holoslide/raster.hpp"

namespace holoslide {

// Loads a PPM (P6, maxval <= 255) or a non-interlaced 8-bit PNG
// (gray / gray+alpha / RGB / RGBA; alpha dropped). Detected by magic bytes.
RgbRaster load_image(const std::filesystem::path& path);

void write_ppm(const std::filesystem::path& path, const RgbRaster& img);

}  // namespace holoslide
