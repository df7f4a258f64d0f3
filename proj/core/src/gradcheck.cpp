#include "mplab/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "mplab/rng.hpp"

namespace mplab::nn {

template <typename T>
double grad_check(const ForwardFn<T>& forward, const BackwardFn<T>& backward,
                  const BasicTensor<T>& input, const GradCheckOptions& opts) {
  const BasicTensor<T> y0 = forward(input);
  BasicTensor<T> weights(y0.shape());
  Rng rng(opts.projection_seed);
  for (std::size_t i = 0; i < weights.size(); ++i) weights[i] = static_cast<T>(rng.uniform(-1, 1));

  const BasicTensor<T> analytic = backward(input, weights);
  if (!(analytic.shape() == input.shape())) {
    throw ConfigError("grad_check: backward returned shape " + to_string(analytic.shape()) +
                      ", expected " + to_string(input.shape()));
  }

  auto projected = [&](const BasicTensor<T>& x) {
    const BasicTensor<T> y = forward(x);
    double acc = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      acc += static_cast<double>(weights[i]) * static_cast<double>(y[i]);
    }
    return acc;
  };

  double worst = 0.0;
  BasicTensor<T> x = input;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (opts.skip && opts.skip(i)) continue;
    const T orig = x[i];
    x[i] = static_cast<T>(orig + opts.epsilon);
    const double up = projected(x);
    x[i] = static_cast<T>(orig - opts.epsilon);
    const double down = projected(x);
    x[i] = orig;
    const double numeric = (up - down) / (2.0 * opts.epsilon);
    const double a = static_cast<double>(analytic[i]);
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

template double grad_check(const ForwardFn<float>&, const BackwardFn<float>&, const Tensor&,
                           const GradCheckOptions&);
template double grad_check(const ForwardFn<double>&, const BackwardFn<double>&, const TensorD&,
                           const GradCheckOptions&);

}  // namespace mplab::nn
