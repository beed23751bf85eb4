// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "moetrack/bbox.hpp"

namespace moetrack {

// Interleaved RGB, values in [0,1].
struct Image {
  int w = 0, h = 0;
  std::vector<float> rgb;

  Image() = default;
  Image(int w_, int h_) : w(w_), h(h_), rgb(static_cast<std::size_t>(w_) * h_ * 3, 0.f) {}

  float& at(int x, int y, int c) { return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c]; }
  float at(int x, int y, int c) const {
    return rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c];
  }
};

// Affine map between crop pixel space and frame pixel space:
// frame = origin + crop * scale.
struct CropTransform {
  double origin_x = 0, origin_y = 0, scale = 1;

  BBox to_frame(const BBox& b) const {
    return {origin_x + b.x * scale, origin_y + b.y * scale, b.w * scale, b.h * scale};
  }
  BBox to_crop(const BBox& b) const {
    return {(b.x - origin_x) / scale, (b.y - origin_y) / scale, b.w / scale, b.h / scale};
  }
};

// Square crop of side factor*sqrt(w*h) centered on the box, padded with the
// per-channel frame mean outside the frame, bilinearly resized to out_size.
std::pair<Image, CropTransform> crop_and_resize(const Image& frame, const BBox& box,
                                                double factor, int out_size);

// 8-bit binary PPM (P6) and 8-bit RGB/RGBA PNG (non-interlaced).
Image read_image(const std::string& path);
void write_ppm(const std::string& path, const Image& img);

// Per-channel normalization applied before patch projection.
inline constexpr float kChannelMean[3] = {0.485f, 0.456f, 0.406f};
inline constexpr float kChannelStd[3] = {0.229f, 0.224f, 0.225f};

}  // namespace moetrack
