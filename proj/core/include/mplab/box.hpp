#pragma once

namespace mplab {

/// Axis-aligned pixel box, half-open: [x_min, x_max) x [y_min, y_max).
struct Box {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 0.0;
  double y_max = 0.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  double area() const {
    return (x_max > x_min && y_max > y_min) ? width() * height() : 0.0;
  }
  double center_x() const { return 0.5 * (x_min + x_max); }
  double center_y() const { return 0.5 * (y_min + y_max); }

  friend bool operator==(const Box&, const Box&) = default;
};

}  // namespace mplab
