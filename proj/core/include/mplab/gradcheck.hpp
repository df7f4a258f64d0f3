#pragma once

#include <cstdint>
#include <functional>

#include "mplab/tensor.hpp"

namespace mplab::nn {

template <typename T>
using ForwardFn = std::function<BasicTensor<T>(const BasicTensor<T>&)>;

/// Maps (input, upstream gradient) to the gradient w.r.t. the input.
template <typename T>
using BackwardFn = std::function<BasicTensor<T>(const BasicTensor<T>&, const BasicTensor<T>&)>;

struct GradCheckOptions {
  double epsilon = 1e-3;
  /// Seed for the random projection weights applied to the output.
  std::uint64_t projection_seed = 1;
  /// Input elements for which this returns true are not compared
  /// (kinks, argmax ties).
  std::function<bool(std::size_t)> skip;
};

/// Compares the analytic backward against central finite differences of the
/// scalar L = sum(r * forward(x)) for fixed random weights r. Returns the
/// maximum relative error |a - b| / max(|a|, |b|, 1e-8).
template <typename T>
double grad_check(const ForwardFn<T>& forward, const BackwardFn<T>& backward,
                  const BasicTensor<T>& input, const GradCheckOptions& opts = {});

}  // namespace mplab::nn
