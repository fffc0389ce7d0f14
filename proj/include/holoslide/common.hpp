#pragma once

#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>

namespace holoslide {

enum class Errc {
  InvalidInput,
  IoError,
  BoundsError,
  FormatError,
  NoForeground,
  InvalidTiling,
  NumericalError,
  InvalidCodebook,
  ShapeError,
  ConfigError,
  TokenError,
  TrainingDiverged,
  GenerationError,
};

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) { throw Error(code, msg); }

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::InvalidInput: return "InvalidInput";
    case Errc::IoError: return "IoError";
    case Errc::BoundsError: return "BoundsError";
    case Errc::FormatError: return "FormatError";
    case Errc::NoForeground: return "NoForeground";
    case Errc::InvalidTiling: return "InvalidTiling";
    case Errc::NumericalError: return "NumericalError";
    case Errc::InvalidCodebook: return "InvalidCodebook";
    case Errc::ShapeError: return "ShapeError";
    case Errc::ConfigError: return "ConfigError";
    case Errc::TokenError: return "TokenError";
    case Errc::TrainingDiverged: return "TrainingDiverged";
    case Errc::GenerationError: return "GenerationError";
  }
  return "Error";
}

inline std::uint64_t ceil_div(std::uint64_t a, std::uint64_t b) { return (a + b - 1) / b; }

// Little-endian scalar encoding; all on-disk formats use these.
inline void put_u16le(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}
inline void put_u32le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}
inline void put_u64le(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

class ByteReader {
 public:
  ByteReader(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16le() {
    const std::uint8_t* p = take(2);
    return std::uint16_t(p[0]) | std::uint16_t(p[1]) << 8;
  }
  std::uint32_t u32le() {
    const std::uint8_t* p = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
    return v;
  }
  std::uint64_t u64le() {
    const std::uint8_t* p = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
    return v;
  }
  const std::uint8_t* take(std::size_t n) {
    if (pos_ + n > size_) fail(Errc::FormatError, "truncated data");
    const std::uint8_t* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  std::size_t remaining() const { return size_ - pos_; }
  std::size_t pos() const { return pos_; }

 private:
  const std::uint8_t* data_;
  std::size_t size_;
  std::size_t pos_ = 0;
};

}  // namespace holoslide
