// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace moetrack {

// Axis-aligned box, top-left corner plus extents, pixel units.
struct BBox {
  double x = 0, y = 0, w = 0, h = 0;

  double area() const { return w * h; }
  double cx() const { return x + w / 2; }
  double cy() const { return y + h / 2; }

  static BBox from_center(double cx, double cy, double w, double h) {
    return {cx - w / 2, cy - h / 2, w, h};
  }

  // Clamp to [0,W)x[0,H), preserving as much extent as possible.
  BBox clamped(double W, double H) const;
};

double iou(const BBox& a, const BBox& b);

// IoU minus (enclosure - union) / enclosure; in (-1, 1].
double giou(const BBox& a, const BBox& b);

}  // namespace moetrack
