#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mplab/layers.hpp"
#include "mplab/tensor.hpp"

namespace mplab::maskpool {

/// Per-pixel foreground mask; 1 = foreground, 0 = background.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int height, int width, std::uint8_t fill = 0);
  /// Throws ValidationError("non-binary mask") if any value is not 0 or 1.
  BinaryMask(int height, int width, std::vector<std::uint8_t> values);

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return values_.size(); }

  std::uint8_t at(int y, int x) const { return values_[static_cast<std::size_t>(y) * width_ + x]; }
  void set(int y, int x, bool fg) { values_[static_cast<std::size_t>(y) * width_ + x] = fg ? 1 : 0; }
  std::span<const std::uint8_t> values() const { return values_; }

  std::size_t area() const;

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::uint8_t> values_;
};

/// Majority vote over factor x factor blocks (partial edge blocks count only
/// in-bounds pixels); ties go to foreground. Output is ceil(h/f) x ceil(w/f).
BinaryMask downsample_mask(const BinaryMask& m, int factor);

/// The source mask and its downsampled levels, keyed by stride.
class MaskPyramid {
 public:
  struct Level {
    int stride;
    BinaryMask mask;
  };

  MaskPyramid() = default;
  /// Level s is downsample_mask(source, s); stride 1 is always present.
  MaskPyramid(const BinaryMask& source, std::span<const int> strides);

  const std::vector<Level>& levels() const { return levels_; }
  /// Throws ConfigError if no level has this stride.
  const BinaryMask& at_stride(int stride) const;
  bool has_stride(int stride) const;

 private:
  std::vector<Level> levels_;
};

/// FG/BG valid-pixel counts in one pooling window.
struct PoolWindowStats {
  int fg = 0;
  int bg = 0;
};

/// Per-window branch choice saved by the forward pass. Indexed by
/// (n * out_h + oy) * out_w + ox; identical for every channel.
struct MaskPoolRecord {
  Shape input_shape;
  Shape output_shape;
  nn::PoolGeometry geometry;
  std::vector<std::uint8_t> fg_branch;
  std::vector<int> selected_count;

  bool empty() const { return fg_branch.empty(); }
};

template <typename T>
struct MaskPoolResult {
  BasicTensor<T> out;
  MaskPoolRecord record;
};

/// Boundary-aware pooling. For every window, count valid FG (n_F) and BG
/// (n_B) pixels; if n_F >= n_B emit the mean of x over the FG pixels,
/// otherwise over the BG pixels. `masks` holds one mask per image, at the
/// spatial size of x, applied to every channel.
template <typename T>
MaskPoolResult<T> maskpool2d_forward(const BasicTensor<T>& x, std::span<const BinaryMask> masks,
                                     const nn::PoolGeometry& g = {});

/// Routes grad_out / selected_count to each pixel of the selected region;
/// overlapping windows accumulate. The mask receives no gradient.
template <typename T>
BasicTensor<T> maskpool2d_backward(std::span<const BinaryMask> masks,
                                   const BasicTensor<T>& grad_out, const MaskPoolRecord& record);

/// Window statistics for a single window (used by tests and FLOP counting).
PoolWindowStats window_stats(const BinaryMask& m, int oy, int ox, const nn::PoolGeometry& g);

/// Multiplies background activations by `weight`; foreground untouched.
template <typename T>
BasicTensor<T> bg_scale(const BasicTensor<T>& x, std::span<const BinaryMask> masks, T weight);

enum class MorphMode { dilate, erode };

/// Applies unit 3x3 (8-connected) dilation or erosion steps until the FG
/// area first reaches >= factor * original (dilate) or <= factor * original
/// (erode). An empty mask is returned unchanged. Dilation stops early if the
/// mask saturates.
BinaryMask morph_perturb(const BinaryMask& m, MorphMode mode, double area_factor);

/// Single unit morphological step; pixels outside the image count as BG.
BinaryMask dilate3x3(const BinaryMask& m);
BinaryMask erode3x3(const BinaryMask& m);

}  // namespace mplab::maskpool
