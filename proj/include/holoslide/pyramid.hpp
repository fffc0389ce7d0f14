#pragma once

#include <filesystem>
#include <memory>
#include <utility>
#include <vector>

#include "holoslide/raster.hpp"

namespace holoslide {

// One resolution level of the pyramid.
struct LevelInfo {
  std::uint64_t width = 0;
  std::uint64_t height = 0;
  std::uint32_t tiles_x = 0;
  std::uint32_t tiles_y = 0;
  std::vector<std::uint64_t> tile_offsets;  // absolute file offsets, row-major
};

struct Region {
  std::uint32_t level = 0;
  std::uint64_t x = 0, y = 0;
  std::uint64_t width = 0, height = 0;
};

// Chunked multi-resolution RGB image container (HHPY file).
//
// Layout, little-endian throughout: magic "HHPY", version u16=1, tile_size
// u32, channels u8=3, level_count u8; per level width u64, height u64 and a
// u64 tile offset table (row-major); then raw uncompressed RGB8 tile
// payloads, edge tiles stored at clipped size. Level L is a 2x box-filter
// (round-half-up) downsample of level L-1; levels stop once
// max(width, height) <= tile_size.
class PyramidImage {
 public:
  PyramidImage() = default;

  static PyramidImage import_image(const RgbRaster& source, std::uint32_t tile_size,
                                   const std::filesystem::path& out_path);
  static PyramidImage open(const std::filesystem::path& path);

  RgbRaster read_region(const Region& r) const;
  std::pair<std::uint64_t, std::uint64_t> level_dims(std::uint32_t level) const;

  std::uint32_t level_count() const { return std::uint32_t(levels_.size()); }
  std::uint32_t tile_size() const { return tile_size_; }
  const std::vector<LevelInfo>& levels() const { return levels_; }
  const std::filesystem::path& path() const { return path_; }

  // Reads are safe from any number of threads; the handle may be shared.

 private:
  struct File;  // pread-based handle

  const LevelInfo& level_or_throw(std::uint32_t level) const;

  std::filesystem::path path_;
  std::uint32_t tile_size_ = 0;
  std::vector<LevelInfo> levels_;
  std::shared_ptr<File> file_;
  std::uint64_t file_size_ = 0;
};

}  // namespace holoslide
