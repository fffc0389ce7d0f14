#include "holoslide/image_io.hpp"

#include <zlib.h>

#include <cctype>
#include <cstdio>
#include <fstream>

namespace holoslide {

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot open " + path.string());
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  if (!in && !in.eof()) fail(Errc::IoError, "read failed on " + path.string());
  return data;
}

// --- PPM (P6) ---

int ppm_token(const std::vector<std::uint8_t>& d, std::size_t& pos) {
  // skip whitespace and '#' comments
  while (pos < d.size()) {
    if (std::isspace(d[pos])) {
      ++pos;
    } else if (d[pos] == '#') {
      while (pos < d.size() && d[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (pos >= d.size() || !std::isdigit(d[pos])) fail(Errc::FormatError, "bad ppm header");
  long v = 0;
  while (pos < d.size() && std::isdigit(d[pos])) {
    v = v * 10 + (d[pos] - '0');
    if (v > 1000000000L) fail(Errc::FormatError, "ppm header value out of range");
    ++pos;
  }
  return int(v);
}

RgbRaster load_ppm(const std::vector<std::uint8_t>& d) {
  std::size_t pos = 2;
  const std::uint64_t w = std::uint64_t(ppm_token(d, pos));
  const std::uint64_t h = std::uint64_t(ppm_token(d, pos));
  const int maxval = ppm_token(d, pos);
  if (w == 0 || h == 0) fail(Errc::InvalidInput, "empty ppm raster");
  if (maxval <= 0 || maxval > 255) fail(Errc::FormatError, "ppm maxval must be <= 255");
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = std::size_t(w) * h * 3;
  if (pos + need > d.size()) fail(Errc::FormatError, "truncated ppm payload");
  RgbRaster out(w, h);
  std::copy(d.begin() + pos, d.begin() + pos + need, out.pixels.begin());
  return out;
}

// --- PNG (8-bit, no interlace) ---

std::uint32_t be32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) << 24 | std::uint32_t(p[1]) << 16 | std::uint32_t(p[2]) << 8 |
         std::uint32_t(p[3]);
}

std::vector<std::uint8_t> zlib_inflate(const std::vector<std::uint8_t>& in,
                                       std::size_t expected) {
  std::vector<std::uint8_t> out(expected);
  z_stream zs{};
  if (inflateInit(&zs) != Z_OK) fail(Errc::FormatError, "zlib init failed");
  zs.next_in = const_cast<Bytef*>(in.data());
  zs.avail_in = uInt(in.size());
  zs.next_out = out.data();
  zs.avail_out = uInt(out.size());
  const int rc = inflate(&zs, Z_FINISH);
  inflateEnd(&zs);
  if (rc != Z_STREAM_END || zs.total_out != expected)
    fail(Errc::FormatError, "png idat inflate failed");
  return out;
}

std::uint8_t paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return std::uint8_t(a);
  if (pb <= pc) return std::uint8_t(b);
  return std::uint8_t(c);
}

RgbRaster load_png(const std::vector<std::uint8_t>& d) {
  static const std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  if (d.size() < 8 || !std::equal(sig, sig + 8, d.begin()))
    fail(Errc::FormatError, "not a png file");
  std::size_t pos = 8;
  std::uint64_t w = 0, h = 0;
  int channels = 0;
  std::vector<std::uint8_t> idat;
  bool saw_ihdr = false, saw_iend = false;
  while (pos + 8 <= d.size() && !saw_iend) {
    const std::uint32_t len = be32(&d[pos]);
    if (pos + 12 + std::size_t(len) > d.size()) fail(Errc::FormatError, "truncated png chunk");
    const char* type = reinterpret_cast<const char*>(&d[pos + 4]);
    const std::uint8_t* body = &d[pos + 8];
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) fail(Errc::FormatError, "bad IHDR length");
      w = be32(body);
      h = be32(body + 4);
      const int bit_depth = body[8];
      const int color_type = body[9];
      const int interlace = body[12];
      if (bit_depth != 8) fail(Errc::FormatError, "only 8-bit png supported");
      if (interlace != 0) fail(Errc::FormatError, "interlaced png not supported");
      switch (color_type) {
        case 0: channels = 1; break;
        case 2: channels = 3; break;
        case 4: channels = 2; break;
        case 6: channels = 4; break;
        default: fail(Errc::FormatError, "unsupported png color type");
      }
      saw_ihdr = true;
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.insert(idat.end(), body, body + len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      saw_iend = true;
    }
    pos += 12 + std::size_t(len);
  }
  if (!saw_ihdr || idat.empty()) fail(Errc::FormatError, "png missing IHDR or IDAT");
  if (w == 0 || h == 0) fail(Errc::InvalidInput, "empty png raster");

  const std::size_t stride = std::size_t(w) * channels;
  std::vector<std::uint8_t> raw = zlib_inflate(idat, (stride + 1) * h);

  // per-row unfilter in place
  std::vector<std::uint8_t> prev(stride, 0);
  RgbRaster out(w, h);
  for (std::uint64_t y = 0; y < h; ++y) {
    const std::uint8_t filter = raw[(stride + 1) * y];
    std::uint8_t* row = &raw[(stride + 1) * y + 1];
    for (std::size_t i = 0; i < stride; ++i) {
      const int a = i >= std::size_t(channels) ? row[i - channels] : 0;
      const int b = prev[i];
      const int c = i >= std::size_t(channels) ? prev[i - channels] : 0;
      switch (filter) {
        case 0: break;
        case 1: row[i] = std::uint8_t(row[i] + a); break;
        case 2: row[i] = std::uint8_t(row[i] + b); break;
        case 3: row[i] = std::uint8_t(row[i] + (a + b) / 2); break;
        case 4: row[i] = std::uint8_t(row[i] + paeth(a, b, c)); break;
        default: fail(Errc::FormatError, "bad png filter type");
      }
    }
    std::copy(row, row + stride, prev.begin());
    for (std::uint64_t x = 0; x < w; ++x) {
      const std::uint8_t* p = row + x * channels;
      switch (channels) {
        case 1: out.set(x, y, p[0], p[0], p[0]); break;
        case 2: out.set(x, y, p[0], p[0], p[0]); break;
        case 3: out.set(x, y, p[0], p[1], p[2]); break;
        case 4: out.set(x, y, p[0], p[1], p[2]); break;
      }
    }
  }
  return out;
}

}  // namespace

RgbRaster load_image(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> data = read_file(path);
  if (data.size() >= 2 && data[0] == 'P' && data[1] == '6') return load_ppm(data);
  if (data.size() >= 8 && data[0] == 0x89 && data[1] == 'P') return load_png(data);
  fail(Errc::FormatError, "unrecognized image format in " + path.string());
}

void write_ppm(const std::filesystem::path& path, const RgbRaster& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            std::streamsize(img.pixels.size()));
  if (!out) fail(Errc::IoError, "write failed on " + path.string());
}

}  // namespace holoslide
