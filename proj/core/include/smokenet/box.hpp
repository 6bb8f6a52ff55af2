#pragma once

#include <string>

namespace smokenet {

// Normalized centre-size box: all coordinates are fractions of the image.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;

  double x_min() const { return cx - w / 2.0; }
  double x_max() const { return cx + w / 2.0; }
  double y_min() const { return cy - h / 2.0; }
  double y_max() const { return cy + h / 2.0; }
  double area() const { return w > 0.0 && h > 0.0 ? w * h : 0.0; }

  static Box from_corners(double x0, double y0, double x1, double y1) {
    return {(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
  }

  friend bool operator==(const Box&, const Box&) = default;
};

// 0 <= cx, cy <= 1 and 0 < w, h <= 1.
bool is_valid(const Box& b);
// Throws ValidationError naming `what` when the box is invalid.
void require_valid(const Box& b, const std::string& what);

}  // namespace smokenet
