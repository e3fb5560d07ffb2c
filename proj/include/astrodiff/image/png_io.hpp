#pragma once
// 8-bit PNG (gray / RGB, non-interlaced) and binary PGM, via zlib.
// Writers always emit filter type 0 at a fixed compression level so outputs
// are byte-stable across runs.

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "astrodiff/core/tensor.hpp"
#include "astrodiff/util/fsutil.hpp"

namespace astrodiff::img {

namespace png_detail {

inline void put_u32be(std::string& s, uint32_t v) {
  s += static_cast<char>((v >> 24) & 0xff);
  s += static_cast<char>((v >> 16) & 0xff);
  s += static_cast<char>((v >> 8) & 0xff);
  s += static_cast<char>(v & 0xff);
}

inline uint32_t read_u32be(const unsigned char* p) {
  return (static_cast<uint32_t>(p[0]) << 24) | (static_cast<uint32_t>(p[1]) << 16) |
         (static_cast<uint32_t>(p[2]) << 8) | p[3];
}

inline void append_chunk(std::string& out, const char type[4], const std::string& data) {
  put_u32be(out, static_cast<uint32_t>(data.size()));
  std::string block(type, 4);
  block += data;
  out += block;
  uLong crc = ::crc32(0L, reinterpret_cast<const Bytef*>(block.data()),
                      static_cast<uInt>(block.size()));
  put_u32be(out, static_cast<uint32_t>(crc));
}

inline unsigned char paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return static_cast<unsigned char>(a);
  if (pb <= pc) return static_cast<unsigned char>(b);
  return static_cast<unsigned char>(c);
}

}  // namespace png_detail

inline unsigned char quantize_u8(float v) {
  float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return static_cast<unsigned char>(c * 255.0f + 0.5f);
}

// ---- PNG write ----

inline std::string encode_png(const tg::Tensorf& chw) {
  if (chw.ndim() != 3 || (chw.dim(0) != 1 && chw.dim(0) != 3))
    throw std::invalid_argument("png: expected [1|3,H,W], got " + tg::shape_str(chw.shape));
  const int C = chw.dim(0), H = chw.dim(1), W = chw.dim(2);

  std::vector<unsigned char> raw(static_cast<size_t>(H) * (1 + static_cast<size_t>(W) * C));
  size_t pos = 0;
  for (int y = 0; y < H; ++y) {
    raw[pos++] = 0;  // filter: none
    for (int x = 0; x < W; ++x)
      for (int c = 0; c < C; ++c) raw[pos++] = quantize_u8(chw.at3(c, y, x));
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> comp(bound);
  if (compress2(comp.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw std::runtime_error("png: deflate failed");
  comp.resize(bound);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  png_detail::put_u32be(ihdr, static_cast<uint32_t>(W));
  png_detail::put_u32be(ihdr, static_cast<uint32_t>(H));
  ihdr += static_cast<char>(8);                   // bit depth
  ihdr += static_cast<char>(C == 1 ? 0 : 2);      // gray / RGB
  ihdr += std::string(3, '\0');                   // compression, filter, interlace
  png_detail::append_chunk(out, "IHDR", ihdr);
  png_detail::append_chunk(out, "IDAT",
                           std::string(reinterpret_cast<const char*>(comp.data()), comp.size()));
  png_detail::append_chunk(out, "IEND", "");
  return out;
}

inline void write_png(const std::string& path, const tg::Tensorf& chw) {
  util::atomic_write(path, encode_png(chw));
}

// ---- PNG read ----

inline tg::Tensorf decode_png(const std::string& bytes) {
  using namespace png_detail;
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const size_t n = bytes.size();
  if (n < 8 || std::memcmp(p, "\x89PNG\r\n\x1a\n", 8) != 0)
    throw std::runtime_error("png: bad signature");

  int W = 0, H = 0, depth = 0, color = 0;
  std::string idat;
  size_t off = 8;
  while (off + 8 <= n) {
    const uint32_t len = read_u32be(p + off);
    if (off + 12 + len > n) throw std::runtime_error("png: truncated chunk");
    const char* type = reinterpret_cast<const char*>(p + off + 4);
    const unsigned char* data = p + off + 8;
    if (std::memcmp(type, "IHDR", 4) == 0) {
      if (len != 13) throw std::runtime_error("png: bad IHDR");
      W = static_cast<int>(read_u32be(data));
      H = static_cast<int>(read_u32be(data + 4));
      depth = data[8];
      color = data[9];
      if (data[12] != 0) throw std::runtime_error("png: interlaced images unsupported");
      if (depth != 8) throw std::runtime_error("png: only 8-bit depth supported");
      if (color != 0 && color != 2 && color != 4 && color != 6)
        throw std::runtime_error("png: unsupported color type " + std::to_string(color));
    } else if (std::memcmp(type, "IDAT", 4) == 0) {
      idat.append(reinterpret_cast<const char*>(data), len);
    } else if (std::memcmp(type, "IEND", 4) == 0) {
      break;
    }
    off += 12 + len;
  }
  if (W <= 0 || H <= 0 || idat.empty()) throw std::runtime_error("png: missing IHDR/IDAT");

  const int src_c = color == 0 ? 1 : color == 2 ? 3 : color == 4 ? 2 : 4;
  const size_t stride = static_cast<size_t>(W) * src_c;
  std::vector<unsigned char> raw(static_cast<size_t>(H) * (1 + stride));
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, reinterpret_cast<const Bytef*>(idat.data()),
                 static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw std::runtime_error("png: inflate failed");

  // unfilter scanlines in place (output rows packed without the filter byte)
  std::vector<unsigned char> pix(static_cast<size_t>(H) * stride);
  const int bpp = src_c;
  for (int y = 0; y < H; ++y) {
    const unsigned char ft = raw[static_cast<size_t>(y) * (1 + stride)];
    const unsigned char* src = &raw[static_cast<size_t>(y) * (1 + stride) + 1];
    unsigned char* dst = &pix[static_cast<size_t>(y) * stride];
    const unsigned char* up = y > 0 ? &pix[static_cast<size_t>(y - 1) * stride] : nullptr;
    for (size_t x = 0; x < stride; ++x) {
      const int a = x >= static_cast<size_t>(bpp) ? dst[x - bpp] : 0;
      const int b = up ? up[x] : 0;
      const int c = (up && x >= static_cast<size_t>(bpp)) ? up[x - bpp] : 0;
      int v = src[x];
      switch (ft) {
        case 0: break;
        case 1: v += a; break;
        case 2: v += b; break;
        case 3: v += (a + b) / 2; break;
        case 4: v += paeth(a, b, c); break;
        default: throw std::runtime_error("png: bad filter type " + std::to_string(ft));
      }
      dst[x] = static_cast<unsigned char>(v & 0xff);
    }
  }

  const int out_c = src_c >= 3 ? 3 : 1;
  tg::Tensorf out({out_c, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) {
      const unsigned char* px = &pix[static_cast<size_t>(y) * stride + static_cast<size_t>(x) * src_c];
      for (int c = 0; c < out_c; ++c)
        out.at3(c, y, x) = static_cast<float>(px[c]) / 255.0f;
    }
  return out;
}

inline tg::Tensorf read_png(const std::string& path) { return decode_png(util::read_file(path)); }

// ---- PGM (binary, single channel) ----

inline void write_pgm(const std::string& path, const tg::Tensorf& chw) {
  if (chw.ndim() != 3 || chw.dim(0) != 1)
    throw std::invalid_argument("pgm: expected [1,H,W], got " + tg::shape_str(chw.shape));
  const int H = chw.dim(1), W = chw.dim(2);
  std::string out = "P5\n" + std::to_string(W) + " " + std::to_string(H) + "\n255\n";
  out.reserve(out.size() + static_cast<size_t>(H) * W);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x) out += static_cast<char>(quantize_u8(chw.at3(0, y, x)));
  util::atomic_write(path, out);
}

inline tg::Tensorf read_pgm(const std::string& path) {
  std::string s = util::read_file(path);
  size_t pos = 0;
  auto token = [&]() {
    while (pos < s.size() && (std::isspace(static_cast<unsigned char>(s[pos])) || s[pos] == '#')) {
      if (s[pos] == '#')
        while (pos < s.size() && s[pos] != '\n') ++pos;
      else
        ++pos;
    }
    size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    return s.substr(start, pos - start);
  };
  if (token() != "P5") throw std::runtime_error("pgm: not binary PGM");
  const int W = std::stoi(token());
  const int H = std::stoi(token());
  const int maxval = std::stoi(token());
  if (maxval != 255) throw std::runtime_error("pgm: only maxval 255 supported");
  ++pos;  // single whitespace after maxval
  if (s.size() - pos < static_cast<size_t>(W) * H) throw std::runtime_error("pgm: truncated");
  tg::Tensorf out({1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      out.at3(0, y, x) = static_cast<float>(static_cast<unsigned char>(s[pos++])) / 255.0f;
  return out;
}

}  // namespace astrodiff::img
