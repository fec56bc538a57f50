// splitnerf is Copyright(c) 2026 the splitnerf authors.
// The splitnerf source code is licensed under the Apache License, Version 2.0.
// SPDX: Apache-2.0

#pragma once

#include <png.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "splitnerf/common.hpp"

namespace splitnerf {

// Row-major interleaved image with values in [0, 1] (colors) or world units
// (depth maps). 1 or 3 channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<double> data;  // size = width * height * channels

  Image() = default;
  Image(int w, int h, int c, double fill = 0.0)
      : width(w), height(h), channels(c),
        data(static_cast<size_t>(w) * h * c, fill) {}

  double& at(int row, int col, int ch = 0) {
    return data[(static_cast<size_t>(row) * width + col) * channels + ch];
  }
  double at(int row, int col, int ch = 0) const {
    return data[(static_cast<size_t>(row) * width + col) * channels + ch];
  }
  bool empty() const { return data.empty(); }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

inline uint8_t quantize8(double v) {
  return static_cast<uint8_t>(std::lround(clamp01(v) * 255.0));
}

namespace detail {
struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;
}  // namespace detail

// 8-bit PNG I/O. Writes GRAY for 1-channel and RGB for 3-channel images.
inline void write_png(const std::string& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3)
    throw InputError("write_png: only 1- or 3-channel images supported: " + path);
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw InputError("write_png: cannot open " + path);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw InputError("write_png: libpng failure on " + path);
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
               static_cast<png_uint_32>(img.height), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint8_t> row(static_cast<size_t>(img.width) * img.channels);
  for (int r = 0; r < img.height; ++r) {
    for (int c = 0; c < img.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch)
        row[static_cast<size_t>(c) * img.channels + ch] =
            quantize8(img.at(r, c, ch));
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

inline Image read_png(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw InputError("read_png: cannot open " + path);
  uint8_t header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
    throw InputError("read_png: not a PNG file: " + path);
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("read_png: libpng failure on " + path);
  }
  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  // Normalize everything to 8-bit gray or RGB.
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  const int ch = static_cast<int>(png_get_channels(png, info));
  if (ch != 1 && ch != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw InputError("read_png: unsupported channel count in " + path);
  }
  Image img(w, h, ch);
  std::vector<uint8_t> row(static_cast<size_t>(w) * ch);
  for (int r = 0; r < h; ++r) {
    png_read_row(png, row.data(), nullptr);
    for (int c = 0; c < w; ++c)
      for (int k = 0; k < ch; ++k)
        img.at(r, c, k) = row[static_cast<size_t>(c) * ch + k] / 255.0;
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return img;
}

// Depth maps: little-endian float32 with a 16-byte header
// (8-byte magic, uint32 width, uint32 height), then row-major values.
inline constexpr char kDepthMagic[8] = {'S', 'N', 'F', 'D', 'E', 'P', '0', '1'};

inline void write_depth_f32(const std::string& path, const Image& depth) {
  if (depth.channels != 1)
    throw InputError("write_depth_f32: depth must be 1-channel");
  detail::FilePtr fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw InputError("write_depth_f32: cannot open " + path);
  std::fwrite(kDepthMagic, 1, 8, fp.get());
  const uint32_t w = static_cast<uint32_t>(depth.width);
  const uint32_t h = static_cast<uint32_t>(depth.height);
  std::fwrite(&w, 4, 1, fp.get());
  std::fwrite(&h, 4, 1, fp.get());
  std::vector<float> row(static_cast<size_t>(depth.width));
  for (int r = 0; r < depth.height; ++r) {
    for (int c = 0; c < depth.width; ++c)
      row[static_cast<size_t>(c)] = static_cast<float>(depth.at(r, c));
    std::fwrite(row.data(), 4, row.size(), fp.get());
  }
}

inline Image read_depth_f32(const std::string& path) {
  detail::FilePtr fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw InputError("read_depth_f32: cannot open " + path);
  char magic[8];
  uint32_t w = 0, h = 0;
  if (std::fread(magic, 1, 8, fp.get()) != 8 ||
      std::memcmp(magic, kDepthMagic, 8) != 0)
    throw InputError("read_depth_f32: bad magic in " + path);
  if (std::fread(&w, 4, 1, fp.get()) != 1 || std::fread(&h, 4, 1, fp.get()) != 1)
    throw InputError("read_depth_f32: truncated header in " + path);
  Image depth(static_cast<int>(w), static_cast<int>(h), 1);
  std::vector<float> row(w);
  for (uint32_t r = 0; r < h; ++r) {
    if (std::fread(row.data(), 4, w, fp.get()) != w)
      throw InputError("read_depth_f32: truncated data in " + path);
    for (uint32_t c = 0; c < w; ++c) depth.at(static_cast<int>(r), static_cast<int>(c)) = row[c];
  }
  return depth;
}

// Min-max normalized 8-bit preview of a depth map.
inline Image depth_preview(const Image& depth) {
  Image out(depth.width, depth.height, 1);
  double lo = 1e300, hi = -1e300;
  for (double v : depth.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const double scale = hi > lo ? 1.0 / (hi - lo) : 0.0;
  for (size_t i = 0; i < depth.data.size(); ++i)
    out.data[i] = (depth.data[i] - lo) * scale;
  return out;
}

}  // namespace splitnerf
