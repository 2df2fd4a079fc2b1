#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <png.h>

#include "edgedet/error.hpp"
#include "edgedet/postprocess.hpp"
#include "edgedet/tensor.hpp"

namespace edgedet::io {

inline constexpr const char* kSupportedImageFormats = "PNG, PPM (P6, maxval 255)";

// 8-bit interleaved RGB.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;

  std::uint8_t at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                static_cast<std::size_t>(x)) * 3 + static_cast<std::size_t>(c)];
  }
};

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::string& path, const void* data, std::size_t n) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write '" + path + "'");
  f.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
}

inline void write_file(const std::string& path, const std::string& text) {
  write_file(path, text.data(), text.size());
}

inline Image decode_ppm(const std::vector<std::uint8_t>& b) {
  std::size_t pos = 2;
  auto next_int = [&]() {
    while (pos < b.size()) {
      if (b[pos] == '#') {
        while (pos < b.size() && b[pos] != '\n') ++pos;
      } else if (std::isspace(b[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= b.size() || !std::isdigit(b[pos])) throw DataError("PPM: malformed header");
    long v = 0;
    while (pos < b.size() && std::isdigit(b[pos])) {
      v = v * 10 + (b[pos++] - '0');
      if (v > (1 << 20)) throw DataError("PPM: header value too large");
    }
    return static_cast<int>(v);
  };
  if (b.size() < 2 || b[0] != 'P' || b[1] != '6') throw DataError("PPM: expected P6 magic");
  Image img;
  img.width = next_int();
  img.height = next_int();
  const int maxval = next_int();
  if (maxval != 255) throw DataError("PPM: only maxval 255 is supported");
  if (pos >= b.size() || !std::isspace(b[pos])) throw DataError("PPM: malformed header");
  ++pos;
  const std::size_t n = static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height) * 3;
  if (img.width <= 0 || img.height <= 0 || b.size() - pos < n) throw DataError("PPM: truncated pixel data");
  img.rgb.assign(b.begin() + static_cast<std::ptrdiff_t>(pos), b.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return img;
}

inline std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string head = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(head.begin(), head.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

inline Image decode_png(const std::vector<std::uint8_t>& b) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&pi, b.data(), b.size()))
    throw DataError(std::string("PNG: ") + pi.message);
  pi.format = PNG_FORMAT_RGB;
  Image img;
  img.width = static_cast<int>(pi.width);
  img.height = static_cast<int>(pi.height);
  img.rgb.resize(PNG_IMAGE_SIZE(pi));
  if (!png_image_finish_read(&pi, nullptr, img.rgb.data(), 0, nullptr)) {
    const std::string msg = pi.message;
    png_image_free(&pi);
    throw DataError("PNG: " + msg);
  }
  return img;
}

inline std::vector<std::uint8_t> encode_png(const Image& img) {
  png_image pi;
  std::memset(&pi, 0, sizeof pi);
  pi.version = PNG_IMAGE_VERSION;
  pi.width = static_cast<png_uint_32>(img.width);
  pi.height = static_cast<png_uint_32>(img.height);
  pi.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(pi, size, 0, img.rgb.data(), 0, nullptr))
    throw Error(std::string("PNG encode: ") + pi.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&pi, out.data(), &size, 0, img.rgb.data(), 0, nullptr))
    throw Error(std::string("PNG encode: ") + pi.message);
  out.resize(size);
  return out;
}

inline Image decode_image(const std::vector<std::uint8_t>& b, const std::string& what = "image") {
  static const std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (b.size() >= 8 && std::equal(kPngSig, kPngSig + 8, b.begin())) return decode_png(b);
  if (b.size() >= 2 && b[0] == 'P' && b[1] == '6') return decode_ppm(b);
  throw DataError(what + ": unsupported image format (supported: " + kSupportedImageFormats + ")");
}

inline Image read_image(const std::string& path) { return decode_image(read_file(path), path); }

inline bool is_image_extension(std::string ext) {
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

// Aspect-preserving resize placement inside a square network input.
struct Letterbox {
  double scale = 1.0;
  int pad_x = 0;
  int pad_y = 0;
  int new_w = 0;
  int new_h = 0;
  int size = 0;
};

inline Letterbox letterbox_geometry(int width, int height, int size) {
  Letterbox lb;
  lb.size = size;
  lb.scale = std::min(static_cast<double>(size) / width, static_cast<double>(size) / height);
  lb.new_w = std::clamp(static_cast<int>(std::lround(width * lb.scale)), 1, size);
  lb.new_h = std::clamp(static_cast<int>(std::lround(height * lb.scale)), 1, size);
  lb.pad_x = (size - lb.new_w) / 2;
  lb.pad_y = (size - lb.new_h) / 2;
  return lb;
}

// Bilinear letterbox into a 1x3xSxS float tensor in [0,1], padded with 114/255.
inline TensorBuf letterbox(const Image& img, int size, Letterbox* geometry = nullptr) {
  if (img.width <= 0 || img.height <= 0) throw DataError("letterbox: empty image");
  const Letterbox lb = letterbox_geometry(img.width, img.height, size);
  if (geometry) *geometry = lb;
  TensorBuf t = TensorBuf::zeros({1, 3, size, size});
  auto& v = t.f32();
  const std::size_t plane = static_cast<std::size_t>(size) * static_cast<std::size_t>(size);
  std::fill(v.begin(), v.end(), 114.0f / 255.0f);
  const double sx = static_cast<double>(img.width) / lb.new_w;
  const double sy = static_cast<double>(img.height) / lb.new_h;
  for (int y = 0; y < lb.new_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < lb.new_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      const std::size_t dst = static_cast<std::size_t>(y + lb.pad_y) * static_cast<std::size_t>(size) +
                              static_cast<std::size_t>(x + lb.pad_x);
      for (int c = 0; c < 3; ++c) {
        const double top = img.at(x0, y0, c) * (1 - wx) + img.at(x1, y0, c) * wx;
        const double bot = img.at(x0, y1, c) * (1 - wx) + img.at(x1, y1, c) * wx;
        v[static_cast<std::size_t>(c) * plane + dst] = static_cast<float>((top * (1 - wy) + bot * wy) / 255.0);
      }
    }
  }
  return t;
}

// Maps a box from network-input pixels back to the original image.
inline Box unletterbox(const Box& b, const Letterbox& lb, int width, int height) {
  auto mx = [&](float x) {
    return static_cast<float>(std::clamp((x - lb.pad_x) / lb.scale, 0.0, static_cast<double>(width)));
  };
  auto my = [&](float y) {
    return static_cast<float>(std::clamp((y - lb.pad_y) / lb.scale, 0.0, static_cast<double>(height)));
  };
  return {mx(b.x1), my(b.y1), mx(b.x2), my(b.y2)};
}

}  // namespace edgedet::io
