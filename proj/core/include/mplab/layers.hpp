#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mplab/tensor.hpp"

namespace mplab::nn {

/// Convolution weights (out, in, k, k) and bias (1, out, 1, 1) with their
/// gradient and momentum buffers.
template <typename T>
struct BasicLayerParams {
  BasicTensor<T> weights;
  BasicTensor<T> bias;
  BasicTensor<T> grad_weights;
  BasicTensor<T> grad_bias;
  BasicTensor<T> mom_weights;
  BasicTensor<T> mom_bias;

  static BasicLayerParams conv(int in_channels, int out_channels, int kernel);

  int out_channels() const { return weights.shape().n; }
  int in_channels() const { return weights.shape().c; }
  int kernel() const { return weights.shape().h; }
  std::size_t param_count() const { return weights.size() + bias.size(); }

  void zero_grad();

  friend bool operator==(const BasicLayerParams&, const BasicLayerParams&) = default;
};

using LayerParams = BasicLayerParams<float>;

/// Output extent of a window op along one axis: floor((in + 2p - k) / s) + 1.
int output_extent(int in, int kernel, int stride, int padding);

struct PoolGeometry {
  int kernel = 3;
  int stride = 2;
  int padding = 1;

  friend bool operator==(const PoolGeometry&, const PoolGeometry&) = default;
};

/// Clipped window [begin, end) along one axis for output index `o`.
struct WindowSpan {
  int begin;
  int end;
};
inline WindowSpan window_span(int o, int extent, int kernel, int stride, int padding) {
  const int start = o * stride - padding;
  return {start < 0 ? 0 : start, start + kernel > extent ? extent : start + kernel};
}

// Convolution (zero padding, cross-correlation).

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicLayerParams<T>& p,
                              int stride, int padding);

/// Returns grad_x and accumulates into p.grad_weights / p.grad_bias.
template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& x, BasicLayerParams<T>& p,
                               const BasicTensor<T>& grad_out, int stride, int padding);

// ReLU.

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x);

/// Gradient is zero where x <= 0.
template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out);

// Max pooling. Padded positions never win; ties go to the first valid
// position in row-major order.

template <typename T>
struct MaxPoolResult {
  BasicTensor<T> out;
  std::vector<std::int64_t> argmax;  ///< flat input offset per output element
};

template <typename T>
MaxPoolResult<T> maxpool2d_forward(const BasicTensor<T>& x, const PoolGeometry& g);

template <typename T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape, std::span<const std::int64_t> argmax,
                                  const BasicTensor<T>& grad_out);

// Average pooling over valid (non-padded) positions.

template <typename T>
BasicTensor<T> avgpool2d_forward(const BasicTensor<T>& x, const PoolGeometry& g);

template <typename T>
BasicTensor<T> avgpool2d_backward(const Shape& input_shape, const BasicTensor<T>& grad_out,
                                  const PoolGeometry& g);

// Losses. Reductions accumulate in double; an empty selection yields loss 0
// and an all-zero gradient.

template <typename T>
struct LossResult {
  double loss = 0.0;
  BasicTensor<T> grad;
};

/// Mean binary cross-entropy over every element, computed from logits.
template <typename T>
LossResult<T> loss_bce_logits(const BasicTensor<T>& logits, const BasicTensor<T>& targets);

/// Softmax cross-entropy over the channel axis, averaged over cells with
/// valid_mask != 0. `class_targets` and `valid_mask` are indexed by
/// (n * h + y) * w + x.
template <typename T>
LossResult<T> loss_softmax_ce(const BasicTensor<T>& logits, std::span<const int> class_targets,
                              std::span<const std::uint8_t> valid_mask);

/// Smooth-L1 (Huber with transition `beta`) averaged over every channel of
/// the valid cells.
template <typename T>
LossResult<T> loss_smooth_l1(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                             std::span<const std::uint8_t> valid_mask, double beta);

}  // namespace mplab::nn
