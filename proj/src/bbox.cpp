// SPDX-License-Identifier: Apache-2.0

#include "moetrack/bbox.hpp"

#include <algorithm>

namespace moetrack {

BBox BBox::clamped(double W, double H) const {
  BBox r = *this;
  r.w = std::clamp(r.w, 0.0, W);
  r.h = std::clamp(r.h, 0.0, H);
  r.x = std::clamp(r.x, 0.0, W - r.w);
  r.y = std::clamp(r.y, 0.0, H - r.h);
  return r;
}

namespace {

double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
  const double ih = std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
  return std::max(iw, 0.0) * std::max(ih, 0.0);
}

}  // namespace

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  return uni > 0 ? inter / uni : 0.0;
}

double giou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  const double uni = a.area() + b.area() - inter;
  const double i = uni > 0 ? inter / uni : 0.0;
  const double cw = std::max(a.x + a.w, b.x + b.w) - std::min(a.x, b.x);
  const double ch = std::max(a.y + a.h, b.y + b.h) - std::min(a.y, b.y);
  const double enc = cw * ch;
  return enc > 0 ? i - (enc - uni) / enc : i;
}

}  // namespace moetrack
