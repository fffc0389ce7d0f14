#include "holoslide/pyramid.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>

#include "holoslide/kernels.hpp"

namespace holoslide {

namespace {
constexpr char kMagic[4] = {'H', 'H', 'P', 'Y'};
constexpr std::uint16_t kVersion = 1;
}  // namespace

struct PyramidImage::File {
  int fd = -1;
  explicit File(const std::filesystem::path& p) {
    fd = ::open(p.c_str(), O_RDONLY);
    if (fd < 0) fail(Errc::IoError, "cannot open " + p.string() + ": " + std::strerror(errno));
  }
  ~File() {
    if (fd >= 0) ::close(fd);
  }
  File(const File&) = delete;
  File& operator=(const File&) = delete;

  void read_at(std::uint64_t offset, void* dst, std::size_t size) const {
    std::uint8_t* p = static_cast<std::uint8_t*>(dst);
    while (size > 0) {
      const ssize_t got = ::pread(fd, p, size, off_t(offset));
      if (got <= 0) fail(Errc::IoError, "pread failed");
      p += got;
      offset += std::uint64_t(got);
      size -= std::size_t(got);
    }
  }
};

PyramidImage PyramidImage::import_image(const RgbRaster& source, std::uint32_t tile_size,
                                        const std::filesystem::path& out_path) {
  if (source.width == 0 || source.height == 0 || source.pixels.empty())
    fail(Errc::InvalidInput, "empty source raster");
  if (source.pixels.size() != std::size_t(source.width) * source.height * 3)
    fail(Errc::InvalidInput, "raster buffer size does not match dimensions");
  const bool pow2 = tile_size != 0 && (tile_size & (tile_size - 1)) == 0;
  if (!pow2 || tile_size < 64 || tile_size > 4096)
    fail(Errc::InvalidInput, "tile_size must be a power of two in [64, 4096]");

  std::vector<RgbRaster> levels;
  levels.push_back(source);
  while (std::max(levels.back().width, levels.back().height) > tile_size) {
    const RgbRaster& prev = levels.back();
    RgbRaster next(ceil_div(prev.width, 2), ceil_div(prev.height, 2));
    kernels::box_down2_rgb8(prev.pixels.data(), prev.width, prev.height, next.pixels.data());
    levels.push_back(std::move(next));
  }

  std::string header;
  header.append(kMagic, 4);
  put_u16le(header, kVersion);
  put_u32le(header, tile_size);
  header.push_back(char(3));  // channels
  header.push_back(char(levels.size()));

  std::vector<LevelInfo> infos(levels.size());
  std::uint64_t header_size = header.size();
  for (std::size_t l = 0; l < levels.size(); ++l) {
    LevelInfo& li = infos[l];
    li.width = levels[l].width;
    li.height = levels[l].height;
    li.tiles_x = std::uint32_t(ceil_div(li.width, tile_size));
    li.tiles_y = std::uint32_t(ceil_div(li.height, tile_size));
    header_size += 16 + 8ull * li.tiles_x * li.tiles_y;
  }

  std::uint64_t offset = header_size;
  for (std::size_t l = 0; l < levels.size(); ++l) {
    LevelInfo& li = infos[l];
    put_u64le(header, li.width);
    put_u64le(header, li.height);
    li.tile_offsets.reserve(std::size_t(li.tiles_x) * li.tiles_y);
    for (std::uint32_t ty = 0; ty < li.tiles_y; ++ty)
      for (std::uint32_t tx = 0; tx < li.tiles_x; ++tx) {
        li.tile_offsets.push_back(offset);
        put_u64le(header, offset);
        const std::uint64_t tw = std::min<std::uint64_t>(tile_size, li.width - tx * std::uint64_t(tile_size));
        const std::uint64_t th = std::min<std::uint64_t>(tile_size, li.height - ty * std::uint64_t(tile_size));
        offset += tw * th * 3;
      }
  }

  std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Errc::IoError, "cannot write " + out_path.string());
  out.write(header.data(), std::streamsize(header.size()));
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const LevelInfo& li = infos[l];
    const RgbRaster& img = levels[l];
    std::vector<char> tile;
    for (std::uint32_t ty = 0; ty < li.tiles_y; ++ty)
      for (std::uint32_t tx = 0; tx < li.tiles_x; ++tx) {
        const std::uint64_t x0 = tx * std::uint64_t(tile_size);
        const std::uint64_t y0 = ty * std::uint64_t(tile_size);
        const std::uint64_t tw = std::min<std::uint64_t>(tile_size, li.width - x0);
        const std::uint64_t th = std::min<std::uint64_t>(tile_size, li.height - y0);
        tile.resize(std::size_t(tw) * th * 3);
        for (std::uint64_t row = 0; row < th; ++row)
          std::memcpy(tile.data() + row * tw * 3, img.px(x0, y0 + row), std::size_t(tw) * 3);
        out.write(tile.data(), std::streamsize(tile.size()));
      }
  }
  out.flush();
  if (!out) fail(Errc::IoError, "write failed on " + out_path.string());
  out.close();

  return open(out_path);
}

PyramidImage PyramidImage::open(const std::filesystem::path& path) {
  PyramidImage img;
  img.path_ = path;
  img.file_ = std::make_shared<File>(path);
  std::error_code ec;
  img.file_size_ = std::filesystem::file_size(path, ec);
  if (ec) fail(Errc::IoError, "cannot stat " + path.string());

  std::uint8_t fixed[12];
  img.file_->read_at(0, fixed, sizeof fixed);
  ByteReader r(fixed, sizeof fixed);
  if (std::memcmp(r.take(4), kMagic, 4) != 0)
    fail(Errc::FormatError, "bad magic in " + path.string());
  if (r.u16le() != kVersion) fail(Errc::FormatError, "unsupported version");
  img.tile_size_ = r.u32le();
  if (r.u8() != 3) fail(Errc::FormatError, "unsupported channel count");
  const std::uint8_t level_count = r.u8();
  if (level_count == 0) fail(Errc::FormatError, "no levels");

  std::uint64_t pos = sizeof fixed;
  img.levels_.resize(level_count);
  for (std::uint32_t l = 0; l < level_count; ++l) {
    LevelInfo& li = img.levels_[l];
    std::uint8_t dims[16];
    img.file_->read_at(pos, dims, sizeof dims);
    ByteReader dr(dims, sizeof dims);
    li.width = dr.u64le();
    li.height = dr.u64le();
    pos += 16;
    if (li.width == 0 || li.height == 0) fail(Errc::FormatError, "empty level");
    li.tiles_x = std::uint32_t(ceil_div(li.width, img.tile_size_));
    li.tiles_y = std::uint32_t(ceil_div(li.height, img.tile_size_));
    const std::size_t n_tiles = std::size_t(li.tiles_x) * li.tiles_y;
    std::vector<std::uint8_t> table(n_tiles * 8);
    img.file_->read_at(pos, table.data(), table.size());
    pos += table.size();
    ByteReader tr(table.data(), table.size());
    li.tile_offsets.resize(n_tiles);
    std::uint64_t prev = 0;
    for (std::size_t t = 0; t < n_tiles; ++t) {
      li.tile_offsets[t] = tr.u64le();
      if (li.tile_offsets[t] <= prev) fail(Errc::FormatError, "tile offsets not increasing");
      if (li.tile_offsets[t] >= img.file_size_)
        fail(Errc::FormatError, "tile offset beyond file end");
      prev = li.tile_offsets[t];
    }
  }
  return img;
}

const LevelInfo& PyramidImage::level_or_throw(std::uint32_t level) const {
  if (level >= levels_.size()) fail(Errc::BoundsError, "level out of range");
  return levels_[level];
}

std::pair<std::uint64_t, std::uint64_t> PyramidImage::level_dims(std::uint32_t level) const {
  const LevelInfo& li = level_or_throw(level);
  return {li.width, li.height};
}

RgbRaster PyramidImage::read_region(const Region& r) const {
  const LevelInfo& li = level_or_throw(r.level);
  if (r.width == 0 || r.height == 0) fail(Errc::BoundsError, "degenerate region");
  if (r.x + r.width > li.width || r.y + r.height > li.height)
    fail(Errc::BoundsError, "region outside level bounds");

  RgbRaster out(r.width, r.height);
  const std::uint64_t ts = tile_size_;
  const std::uint64_t tx0 = r.x / ts, tx1 = (r.x + r.width - 1) / ts;
  const std::uint64_t ty0 = r.y / ts, ty1 = (r.y + r.height - 1) / ts;
  std::vector<std::uint8_t> tile;
  for (std::uint64_t ty = ty0; ty <= ty1; ++ty) {
    for (std::uint64_t tx = tx0; tx <= tx1; ++tx) {
      const std::uint64_t x0 = tx * ts, y0 = ty * ts;
      const std::uint64_t tw = std::min(ts, li.width - x0);
      const std::uint64_t th = std::min(ts, li.height - y0);
      const std::uint64_t offset = li.tile_offsets[ty * li.tiles_x + tx];
      const std::uint64_t bytes = tw * th * 3;
      if (offset + bytes > file_size_)
        fail(Errc::FormatError, "corrupted tile: payload beyond file end");
      tile.resize(std::size_t(bytes));
      file_->read_at(offset, tile.data(), tile.size());
      // intersect tile with the region
      const std::uint64_t ix0 = std::max(r.x, x0), ix1 = std::min(r.x + r.width, x0 + tw);
      const std::uint64_t iy0 = std::max(r.y, y0), iy1 = std::min(r.y + r.height, y0 + th);
      for (std::uint64_t y = iy0; y < iy1; ++y) {
        const std::uint8_t* src = tile.data() + ((y - y0) * tw + (ix0 - x0)) * 3;
        std::memcpy(out.px(ix0 - r.x, y - r.y), src, std::size_t(ix1 - ix0) * 3);
      }
    }
  }
  return out;
}

}  // namespace holoslide
