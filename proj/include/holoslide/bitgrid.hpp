#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "holoslide/common.hpp"

namespace holoslide {

// Packed boolean occupancy grid, one word-padded row of bits per image row.
class BitGrid {
 public:
  BitGrid() = default;
  BitGrid(std::uint64_t width, std::uint64_t height)
      : w_(width), h_(height), wpr_((width + 63) / 64), words_(wpr_ * height, 0) {}

  std::uint64_t width() const { return w_; }
  std::uint64_t height() const { return h_; }
  bool empty() const { return w_ == 0 || h_ == 0; }

  bool get(std::uint64_t x, std::uint64_t y) const {
    return (words_[y * wpr_ + x / 64] >> (x % 64)) & 1u;
  }
  void set(std::uint64_t x, std::uint64_t y, bool v) {
    std::uint64_t& word = words_[y * wpr_ + x / 64];
    const std::uint64_t bit = 1ull << (x % 64);
    if (v)
      word |= bit;
    else
      word &= ~bit;
  }

  std::uint64_t count() const;
  // Popcount over the rectangle [x0, x0+w) x [y0, y0+h); must lie in bounds.
  std::uint64_t count_rect(std::uint64_t x0, std::uint64_t y0, std::uint64_t w,
                           std::uint64_t h) const;
  // Popcount of the bitwise AND with an equally sized grid.
  std::uint64_t intersect_count(const BitGrid& o) const;

  // Row-major run lengths alternating background/foreground, background first.
  std::vector<std::uint64_t> to_runs() const;
  static BitGrid from_runs(std::uint64_t width, std::uint64_t height,
                           const std::vector<std::uint64_t>& runs);

  // Block-OR reduction by 2^level_delta per axis; output dims are ceil-divided.
  BitGrid or_downsample(std::uint32_t level_delta) const;

  bool operator==(const BitGrid& o) const {
    return w_ == o.w_ && h_ == o.h_ && words_ == o.words_;
  }

 private:
  std::uint64_t w_ = 0, h_ = 0, wpr_ = 0;
  std::vector<std::uint64_t> words_;
};

// Run-length mask as stored on disk; the streaming form used by WSI metrics.
struct RleMask {
  std::uint32_t level = 0;
  std::uint64_t width = 0;
  std::uint64_t height = 0;
  std::vector<std::uint64_t> runs;  // alternating, background first

  static RleMask from_grid(std::uint32_t level, const BitGrid& g) {
    return RleMask{level, g.width(), g.height(), g.to_runs()};
  }
  BitGrid to_grid() const { return BitGrid::from_runs(width, height, runs); }
  std::uint64_t foreground_count() const {
    std::uint64_t n = 0;
    for (std::size_t i = 1; i < runs.size(); i += 2) n += runs[i];
    return n;
  }
};

// Mask container file: magic ("HHFG" foreground / "HHSM" segmentation), then
// level u32, width u64, height u64, run count u64, and u32 runs alternating
// background/foreground starting with background. Runs longer than u32 are
// split with zero-length runs of the opposite class in between.
void write_mask(const std::filesystem::path& path, const char magic[4], const RleMask& mask);
RleMask read_mask(const std::filesystem::path& path, std::string* magic_out = nullptr);

}  // namespace holoslide
