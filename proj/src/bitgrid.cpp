#include "holoslide/bitgrid.hpp"

#include <bit>
#include <fstream>
#include <limits>

namespace holoslide {

std::uint64_t BitGrid::count() const {
  std::uint64_t n = 0;
  for (std::uint64_t w : words_) n += std::uint64_t(std::popcount(w));
  return n;
}

std::uint64_t BitGrid::count_rect(std::uint64_t x0, std::uint64_t y0, std::uint64_t w,
                                  std::uint64_t h) const {
  if (x0 + w > w_ || y0 + h > h_) fail(Errc::BoundsError, "rect outside grid");
  if (w == 0 || h == 0) return 0;
  const std::uint64_t x1 = x0 + w;  // exclusive
  const std::uint64_t first_word = x0 / 64;
  const std::uint64_t last_word = (x1 - 1) / 64;
  const std::uint64_t head_mask = ~0ull << (x0 % 64);
  const std::uint64_t tail_mask = (x1 % 64) ? ~0ull >> (64 - x1 % 64) : ~0ull;
  std::uint64_t n = 0;
  for (std::uint64_t y = y0; y < y0 + h; ++y) {
    const std::uint64_t* row = words_.data() + y * wpr_;
    if (first_word == last_word) {
      n += std::uint64_t(std::popcount(row[first_word] & head_mask & tail_mask));
      continue;
    }
    n += std::uint64_t(std::popcount(row[first_word] & head_mask));
    for (std::uint64_t k = first_word + 1; k < last_word; ++k)
      n += std::uint64_t(std::popcount(row[k]));
    n += std::uint64_t(std::popcount(row[last_word] & tail_mask));
  }
  return n;
}

std::uint64_t BitGrid::intersect_count(const BitGrid& o) const {
  if (w_ != o.w_ || h_ != o.h_) fail(Errc::ShapeError, "grid shape mismatch");
  std::uint64_t n = 0;
  for (std::size_t i = 0; i < words_.size(); ++i)
    n += std::uint64_t(std::popcount(words_[i] & o.words_[i]));
  return n;
}

std::vector<std::uint64_t> BitGrid::to_runs() const {
  std::vector<std::uint64_t> runs;
  bool current = false;  // background first
  std::uint64_t len = 0;
  for (std::uint64_t y = 0; y < h_; ++y) {
    for (std::uint64_t x = 0; x < w_; ++x) {
      const bool v = get(x, y);
      if (v == current) {
        ++len;
      } else {
        runs.push_back(len);
        current = v;
        len = 1;
      }
    }
  }
  if (w_ * h_ > 0) runs.push_back(len);
  return runs;
}

BitGrid BitGrid::from_runs(std::uint64_t width, std::uint64_t height,
                           const std::vector<std::uint64_t>& runs) {
  BitGrid g(width, height);
  std::uint64_t pos = 0;
  bool current = false;
  for (std::uint64_t len : runs) {
    if (current) {
      for (std::uint64_t i = 0; i < len; ++i) {
        const std::uint64_t p = pos + i;
        g.set(p % width, p / width, true);
      }
    }
    pos += len;
    current = !current;
  }
  if (pos != width * height) fail(Errc::FormatError, "run lengths do not cover the grid");
  return g;
}

BitGrid BitGrid::or_downsample(std::uint32_t level_delta) const {
  if (level_delta == 0) return *this;
  const std::uint64_t f = 1ull << level_delta;
  BitGrid out(ceil_div(w_, f), ceil_div(h_, f));
  for (std::uint64_t y = 0; y < h_; ++y)
    for (std::uint64_t x = 0; x < w_; ++x)
      if (get(x, y)) out.set(x / f, y / f, true);
  return out;
}

void write_mask(const std::filesystem::path& path, const char magic[4], const RleMask& mask) {
  std::string buf;
  buf.append(magic, 4);
  put_u32le(buf, mask.level);
  put_u64le(buf, mask.width);
  put_u64le(buf, mask.height);
  // split over-long runs with zero-length spacers of the opposite class
  std::vector<std::uint32_t> runs32;
  runs32.reserve(mask.runs.size());
  constexpr std::uint64_t kMax = std::numeric_limits<std::uint32_t>::max();
  for (std::uint64_t r : mask.runs) {
    while (r > kMax) {
      runs32.push_back(std::uint32_t(kMax));
      runs32.push_back(0);
      r -= kMax;
    }
    runs32.push_back(std::uint32_t(r));
  }
  put_u64le(buf, runs32.size());
  for (std::uint32_t r : runs32) put_u32le(buf, r);

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
  out.write(buf.data(), std::streamsize(buf.size()));
  if (!out) fail(Errc::IoError, "write failed on " + path.string());
}

RleMask read_mask(const std::filesystem::path& path, std::string* magic_out) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  ByteReader r(data.data(), data.size());
  const std::uint8_t* magic = r.take(4);
  std::string m(reinterpret_cast<const char*>(magic), 4);
  if (m != "HHFG" && m != "HHSM") fail(Errc::FormatError, "bad mask magic in " + path.string());
  if (magic_out) *magic_out = m;
  RleMask mask;
  mask.level = r.u32le();
  mask.width = r.u64le();
  mask.height = r.u64le();
  const std::uint64_t n = r.u64le();
  mask.runs.reserve(n);
  std::uint64_t total = 0;
  // Raw runs alternate classes strictly; zero-length spacers from the u32
  // splitting are dropped, which merges their same-class neighbors.
  for (std::uint64_t i = 0; i < n; ++i) {
    const std::uint32_t v = r.u32le();
    total += v;
    const bool cls = (i % 2) == 1;  // false = background
    if (mask.runs.empty()) {
      mask.runs.push_back(v);  // first background run, may legitimately be 0
      continue;
    }
    const bool last_cls = (mask.runs.size() % 2) == 0;  // class of runs.back()
    if (cls == last_cls) {
      mask.runs.back() += v;
    } else if (v == 0) {
      continue;  // spacer
    } else {
      mask.runs.push_back(v);
    }
  }
  if (total != mask.width * mask.height)
    fail(Errc::FormatError, "mask runs do not cover grid in " + path.string());
  return mask;
}

}  // namespace holoslide
