#pragma once

#include "mplab/box.hpp"

namespace mplab {

/// One predicted object after decoding and NMS.
struct Detection {
  int class_id = 0;
  double score = 0.0;
  Box box;
  int cell = -1;  ///< head grid cell that produced it, -1 if external

  friend bool operator==(const Detection&, const Detection&) = default;
};

}  // namespace mplab
