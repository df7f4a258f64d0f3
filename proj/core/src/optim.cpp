#include "mplab/optim.hpp"

namespace mplab::nn {

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

namespace {

void update(Tensor& w, Tensor& grad, Tensor& velocity, const OptimizerConfig& cfg) {
  const auto lr = static_cast<float>(cfg.learning_rate);
  const auto mu = static_cast<float>(cfg.momentum);
  const auto wd = static_cast<float>(cfg.weight_decay);
  for (std::size_t i = 0; i < w.size(); ++i) {
    velocity[i] = mu * velocity[i] + grad[i] + wd * w[i];
    w[i] -= lr * velocity[i];
    grad[i] = 0.0f;
  }
}

}  // namespace

void sgd_step(std::span<LayerParams* const> params, const OptimizerConfig& cfg) {
  cfg.validate();
  for (LayerParams* p : params) {
    if (!(p->grad_weights.shape() == p->weights.shape()) ||
        !(p->mom_weights.shape() == p->weights.shape()) ||
        !(p->grad_bias.shape() == p->bias.shape()) || !(p->mom_bias.shape() == p->bias.shape())) {
      throw ConfigError("sgd_step: gradient/momentum buffers do not match parameters");
    }
    update(p->weights, p->grad_weights, p->mom_weights, cfg);
    update(p->bias, p->grad_bias, p->mom_bias, cfg);
  }
}

}  // namespace mplab::nn
