// SPDX-License-Identifier: Apache-2.0

#include "moetrack/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace moetrack {

std::pair<Image, CropTransform> crop_and_resize(const Image& frame, const BBox& box,
                                                double factor, int out_size) {
  if (factor <= 0 || out_size <= 0)
    throw std::invalid_argument("crop_and_resize: factor and out_size must be positive");
  double side = factor * std::sqrt(std::max(box.w, 0.0) * std::max(box.h, 0.0));
  if (side < 1.0) {
    std::fprintf(stderr, "warning: degenerate bbox, using minimum crop side\n");
    side = 1.0;
  }
  CropTransform tf;
  tf.scale = side / out_size;
  tf.origin_x = box.cx() - side / 2;
  tf.origin_y = box.cy() - side / 2;

  float mean[3] = {0, 0, 0};
  const std::size_t n = static_cast<std::size_t>(frame.w) * frame.h;
  for (std::size_t i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) mean[c] += frame.rgb[i * 3 + c];
  if (n > 0)
    for (int c = 0; c < 3; ++c) mean[c] /= static_cast<float>(n);

  auto sample = [&](double fx, double fy, int c) -> float {
    // bilinear on pixel centers; anything outside the frame reads the mean
    const double px = fx - 0.5, py = fy - 0.5;
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const double ax = px - x0, ay = py - y0;
    auto tex = [&](int x, int y) -> float {
      if (x < 0 || y < 0 || x >= frame.w || y >= frame.h) return mean[c];
      return frame.at(x, y, c);
    };
    return static_cast<float>((1 - ax) * (1 - ay) * tex(x0, y0) +
                              ax * (1 - ay) * tex(x0 + 1, y0) +
                              (1 - ax) * ay * tex(x0, y0 + 1) +
                              ax * ay * tex(x0 + 1, y0 + 1));
  };

  Image out(out_size, out_size);
  for (int v = 0; v < out_size; ++v)
    for (int u = 0; u < out_size; ++u) {
      const double fx = tf.origin_x + (u + 0.5) * tf.scale;
      const double fy = tf.origin_y + (v + 0.5) * tf.scale;
      for (int c = 0; c < 3; ++c) out.at(u, v, c) = sample(fx, fy, c);
    }
  return {std::move(out), tf};
}

// ---------------------------------------------------------------- PPM I/O ---

namespace {

Image read_ppm(std::ifstream& in, const std::string& path) {
  std::string magic;
  in >> magic;
  if (magic != "P6") throw std::runtime_error(path + ": not a P6 PPM");
  auto next_token = [&]() -> long {
    // skips whitespace and '#' comments
    for (;;) {
      int ch = in.peek();
      if (ch == '#') {
        std::string line;
        std::getline(in, line);
      } else if (std::isspace(ch)) {
        in.get();
      } else {
        break;
      }
    }
    long v;
    in >> v;
    return v;
  };
  const long w = next_token(), h = next_token(), maxval = next_token();
  in.get();  // single whitespace before payload
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error(path + ": unsupported PPM header");
  Image img(static_cast<int>(w), static_cast<int>(h));
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) throw std::runtime_error(path + ": truncated PPM payload");
  for (std::size_t i = 0; i < buf.size(); ++i) img.rgb[i] = buf[i] / 255.0f;
  return img;
}

// ---------------------------------------------------------------- PNG I/O ---

std::uint32_t be32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

int paeth(int a, int b, int c) {
  const int p = a + b - c;
  const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  return pb <= pc ? b : c;
}

Image read_png(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> file((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (file.size() < 8 || std::memcmp(file.data(), sig, 8) != 0)
    throw std::runtime_error(path + ": not a PNG");
  std::size_t pos = 8;
  int w = 0, h = 0, channels = 0;
  std::vector<unsigned char> idat;
  while (pos + 8 <= file.size()) {
    const std::uint32_t len = be32(&file[pos]);
    const std::string type(reinterpret_cast<const char*>(&file[pos + 4]), 4);
    if (pos + 12 + len > file.size()) throw std::runtime_error(path + ": truncated PNG");
    const unsigned char* data = &file[pos + 8];
    if (type == "IHDR") {
      w = static_cast<int>(be32(data));
      h = static_cast<int>(be32(data + 4));
      const int depth = data[8], color = data[9], interlace = data[12];
      if (depth != 8 || (color != 2 && color != 6) || interlace != 0)
        throw std::runtime_error(path + ": only 8-bit RGB/RGBA non-interlaced PNG supported");
      channels = color == 2 ? 3 : 4;
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    pos += 12 + len;
  }
  if (w <= 0 || h <= 0 || idat.empty()) throw std::runtime_error(path + ": bad PNG");

  const std::size_t stride = static_cast<std::size_t>(w) * channels;
  std::vector<unsigned char> raw((stride + 1) * h);
  uLongf raw_len = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
      raw_len != raw.size())
    throw std::runtime_error(path + ": PNG inflate failed");

  Image img(w, h);
  std::vector<unsigned char> prev(stride, 0), cur(stride);
  for (int y = 0; y < h; ++y) {
    const unsigned char* row = &raw[static_cast<std::size_t>(y) * (stride + 1)];
    const int filter = row[0];
    for (std::size_t i = 0; i < stride; ++i) {
      const int x = row[1 + i];
      const int a = i >= static_cast<std::size_t>(channels) ? cur[i - channels] : 0;
      const int b = prev[i];
      const int c = i >= static_cast<std::size_t>(channels) ? prev[i - channels] : 0;
      int v;
      switch (filter) {
        case 0: v = x; break;
        case 1: v = x + a; break;
        case 2: v = x + b; break;
        case 3: v = x + (a + b) / 2; break;
        case 4: v = x + paeth(a, b, c); break;
        default: throw std::runtime_error(path + ": bad PNG filter");
      }
      cur[i] = static_cast<unsigned char>(v);
    }
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch)
        img.at(x, y, ch) = cur[static_cast<std::size_t>(x) * channels + ch] / 255.0f;
    std::swap(prev, cur);
  }
  return img;
}

}  // namespace

Image read_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open image " + path);
  const int c0 = in.peek();
  if (c0 == 'P') return read_ppm(in, path);
  if (c0 == 0x89) return read_png(path);
  throw std::runtime_error(path + ": unsupported image format (PPM or PNG expected)");
}

void write_ppm(const std::string& path, const Image& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> buf(img.rgb.size());
  for (std::size_t i = 0; i < buf.size(); ++i)
    buf[i] = static_cast<unsigned char>(
        std::lround(std::clamp(img.rgb[i], 0.0f, 1.0f) * 255.0f));
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size()));
  if (!out) throw std::runtime_error("short write to " + path);
}

}  // namespace moetrack
