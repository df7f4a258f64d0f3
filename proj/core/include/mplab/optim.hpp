#pragma once

#include <span>

#include "mplab/layers.hpp"

namespace mplab::nn {

struct OptimizerConfig {
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;

  /// Throws ConfigError unless lr > 0, momentum in [0, 1), weight_decay >= 0.
  void validate() const;
};

/// SGD with momentum and L2 decay:
///   v <- momentum * v + grad + weight_decay * w;  w <- w - lr * v
/// Gradients are zeroed afterwards.
void sgd_step(std::span<LayerParams* const> params, const OptimizerConfig& cfg);

}  // namespace mplab::nn
