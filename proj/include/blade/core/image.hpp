#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "blade/core/error.hpp"
#include "blade/core/tensor.hpp"

namespace blade {

/// 8-bit RGB raster with just enough drawing primitives for sample grids and
/// metric plots. Written out as PNG (stored-deflate, no external codec).
class Canvas {
 public:
  Canvas(int width, int height, std::array<uint8_t, 3> bg = {255, 255, 255})
      : w_(width), h_(height), px_(static_cast<size_t>(width) * height * 3) {
    for (int i = 0; i < width * height; ++i)
      for (int c = 0; c < 3; ++c) px_[static_cast<size_t>(i) * 3 + c] = bg[static_cast<size_t>(c)];
  }

  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, std::array<uint8_t, 3> rgb) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    size_t i = (static_cast<size_t>(y) * w_ + x) * 3;
    px_[i] = rgb[0];
    px_[i + 1] = rgb[1];
    px_[i + 2] = rgb[2];
  }

  void fill_rect(int x0, int y0, int x1, int y1, std::array<uint8_t, 3> rgb) {
    for (int y = std::max(0, y0); y < std::min(h_, y1); ++y)
      for (int x = std::max(0, x0); x < std::min(w_, x1); ++x) set(x, y, rgb);
  }

  void draw_disc(int cx, int cy, int r, std::array<uint8_t, 3> rgb) {
    for (int y = cy - r; y <= cy + r; ++y)
      for (int x = cx - r; x <= cx + r; ++x)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= r * r) set(x, y, rgb);
  }

  void draw_line(int x0, int y0, int x1, int y1, std::array<uint8_t, 3> rgb) {
    int dx = std::abs(x1 - x0), sx = x0 < x1 ? 1 : -1;
    int dy = -std::abs(y1 - y0), sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, rgb);
      if (x0 == x1 && y0 == y1) break;
      int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void save_png(const std::string& path) const { write_png(path, px_.data(), w_, h_); }

  /// PNG with 8-bit RGB, zlib stream built from stored deflate blocks.
  static void write_png(const std::string& path, const uint8_t* rgb, int w, int h) {
    std::filesystem::create_directories(std::filesystem::path(path).parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw TrainError("cannot write image: " + path);

    auto be32 = [](uint32_t v) {
      return std::array<uint8_t, 4>{static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                                    static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
    };
    auto chunk = [&](const char type[4], const std::vector<uint8_t>& data) {
      auto len = be32(static_cast<uint32_t>(data.size()));
      os.write(reinterpret_cast<const char*>(len.data()), 4);
      std::vector<uint8_t> body(type, type + 4);
      body.insert(body.end(), data.begin(), data.end());
      os.write(reinterpret_cast<const char*>(body.data()), static_cast<std::streamsize>(body.size()));
      auto crc = be32(crc32(body.data(), body.size()));
      os.write(reinterpret_cast<const char*>(crc.data()), 4);
    };

    const uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    os.write(reinterpret_cast<const char*>(sig), 8);

    std::vector<uint8_t> ihdr;
    for (uint8_t b : be32(static_cast<uint32_t>(w))) ihdr.push_back(b);
    for (uint8_t b : be32(static_cast<uint32_t>(h))) ihdr.push_back(b);
    ihdr.insert(ihdr.end(), {8, 2, 0, 0, 0});  // 8-bit, truecolor
    chunk("IHDR", ihdr);

    // Scanlines with filter byte 0.
    std::vector<uint8_t> raw;
    raw.reserve(static_cast<size_t>(h) * (static_cast<size_t>(w) * 3 + 1));
    for (int y = 0; y < h; ++y) {
      raw.push_back(0);
      const uint8_t* row = rgb + static_cast<size_t>(y) * w * 3;
      raw.insert(raw.end(), row, row + static_cast<size_t>(w) * 3);
    }

    std::vector<uint8_t> z{0x78, 0x01};
    size_t pos = 0;
    while (pos < raw.size() || raw.empty()) {
      size_t n = std::min<size_t>(raw.size() - pos, 65535);
      bool last = pos + n == raw.size();
      z.push_back(last ? 1 : 0);
      z.push_back(static_cast<uint8_t>(n & 0xff));
      z.push_back(static_cast<uint8_t>(n >> 8));
      z.push_back(static_cast<uint8_t>(~n & 0xff));
      z.push_back(static_cast<uint8_t>((~n >> 8) & 0xff));
      z.insert(z.end(), raw.begin() + static_cast<long>(pos), raw.begin() + static_cast<long>(pos + n));
      pos += n;
      if (last || raw.empty()) break;
    }
    uint32_t a = 1, b = 0;
    for (uint8_t v : raw) {
      a = (a + v) % 65521;
      b = (b + a) % 65521;
    }
    for (uint8_t v : be32((b << 16) | a)) z.push_back(v);
    chunk("IDAT", z);
    chunk("IEND", {});
    if (!os) throw TrainError("short write on image: " + path);
  }

 private:
  static uint32_t crc32(const uint8_t* data, size_t n) {
    static const auto table = [] {
      std::array<uint32_t, 256> t{};
      for (uint32_t i = 0; i < 256; ++i) {
        uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xedb88320u ^ (c >> 1) : c >> 1;
        t[i] = c;
      }
      return t;
    }();
    uint32_t c = 0xffffffffu;
    for (size_t i = 0; i < n; ++i) c = table[(c ^ data[i]) & 0xff] ^ (c >> 8);
    return c ^ 0xffffffffu;
  }

  int w_, h_;
  std::vector<uint8_t> px_;
};

/// Tile a batch of NCHW images (values in [0,1]) into a grid PNG.
inline void save_image_grid(const std::string& path, const TensorF& batch, int cols, int upscale = 3) {
  int n = batch.dim(0), c = batch.dim(1), h = batch.dim(2), w = batch.dim(3);
  int rows = (n + cols - 1) / cols;
  const int pad = 2;
  Canvas canvas(cols * (w * upscale + pad) + pad, rows * (h * upscale + pad) + pad, {32, 32, 32});
  for (int i = 0; i < n; ++i) {
    int gx = (i % cols) * (w * upscale + pad) + pad;
    int gy = (i / cols) * (h * upscale + pad) + pad;
    for (int y = 0; y < h * upscale; ++y)
      for (int x = 0; x < w * upscale; ++x) {
        std::array<uint8_t, 3> rgb;
        for (int ch = 0; ch < 3; ++ch) {
          float v = batch.at(i, std::min(ch, c - 1), y / upscale, x / upscale);
          rgb[static_cast<size_t>(ch)] = static_cast<uint8_t>(std::clamp(v, 0.0f, 1.0f) * 255.0f + 0.5f);
        }
        canvas.set(gx + x, gy + y, rgb);
      }
  }
  canvas.save_png(path);
}

}  // namespace blade
