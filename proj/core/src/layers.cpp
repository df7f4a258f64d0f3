#include "mplab/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace mplab {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + std::to_string(s.h) +
         ", " + std::to_string(s.w) + ")";
}

template <typename T>
BasicTensor<T> concat_batch(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  s.n = 0;
  for (const auto& p : parts) {
    const Shape& ps = p.shape();
    if (ps.c != s.c || ps.h != s.h || ps.w != s.w) {
      throw ConfigError("concat_batch: mismatched shapes " + to_string(parts.front().shape()) +
                        " and " + to_string(ps));
    }
    s.n += ps.n;
  }
  std::vector<T> data;
  data.reserve(s.numel());
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return BasicTensor<T>(s, std::move(data));
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const std::string& where) {
  if (!t.all_finite()) throw NumericError("non-finite value in " + where);
}

template Tensor concat_batch(std::span<const Tensor>);
template TensorD concat_batch(std::span<const TensorD>);
template void require_finite(const Tensor&, const std::string&);
template void require_finite(const TensorD&, const std::string&);

}  // namespace mplab

namespace mplab::nn {

namespace {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMatrix<T>>;

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) {
    throw ConfigError(std::string(what) + ": shape mismatch " + to_string(a) + " vs " +
                      to_string(b));
  }
}

void check_pool_geometry(const PoolGeometry& g) {
  if (g.kernel < 1 || g.stride < 1 || g.padding < 0) {
    throw ConfigError("pooling requires kernel >= 1, stride >= 1, padding >= 0");
  }
}

// Unfolds image `n` of x into a (C*k*k) x (OH*OW) matrix.
template <typename T>
void im2col(const BasicTensor<T>& x, int n, int k, int stride, int padding, int oh, int ow,
            T* cols) {
  const Shape& s = x.shape();
  const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < s.c; ++c) {
    const T* src = x.plane(n, c);
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        T* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * ncols;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - padding + ki;
          T* dst = row + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= s.h) {
            std::fill(dst, dst + ow, T(0));
            continue;
          }
          const T* srow = src + static_cast<std::size_t>(iy) * s.w;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * stride - padding + kj;
            dst[xo] = (ix < 0 || ix >= s.w) ? T(0) : srow[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, int n, int k, int stride, int padding, int oh, int ow,
                BasicTensor<T>& gx) {
  const Shape& s = gx.shape();
  const std::size_t ncols = static_cast<std::size_t>(oh) * ow;
  for (int c = 0; c < s.c; ++c) {
    T* dst = gx.plane(n, c);
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const T* row = cols + ((static_cast<std::size_t>(c) * k + ki) * k + kj) * ncols;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * stride - padding + ki;
          if (iy < 0 || iy >= s.h) continue;
          T* drow = dst + static_cast<std::size_t>(iy) * s.w;
          const T* srow = row + static_cast<std::size_t>(y) * ow;
          for (int xo = 0; xo < ow; ++xo) {
            const int ix = xo * stride - padding + kj;
            if (ix >= 0 && ix < s.w) drow[ix] += srow[xo];
          }
        }
      }
    }
  }
}

template <typename T>
Shape conv_output_shape(const BasicTensor<T>& x, const BasicLayerParams<T>& p, int stride,
                        int padding) {
  const Shape& s = x.shape();
  if (stride < 1 || padding < 0) throw ConfigError("conv2d: stride >= 1 and padding >= 0");
  if (p.in_channels() != s.c) {
    throw ConfigError("conv2d: input has " + std::to_string(s.c) + " channels, kernel expects " +
                      std::to_string(p.in_channels()));
  }
  if (p.weights.shape().h != p.weights.shape().w) throw ConfigError("conv2d: non-square kernel");
  if (p.bias.size() != static_cast<std::size_t>(p.out_channels())) {
    throw ConfigError("conv2d: bias length does not match output channels");
  }
  const int k = p.kernel();
  if (s.h + 2 * padding < k || s.w + 2 * padding < k) {
    throw ConfigError("conv2d: kernel " + std::to_string(k) + " does not fit input " +
                      to_string(s));
  }
  return {s.n, p.out_channels(), output_extent(s.h, k, stride, padding),
          output_extent(s.w, k, stride, padding)};
}

}  // namespace

int output_extent(int in, int kernel, int stride, int padding) {
  if (stride < 1) throw ConfigError("stride must be >= 1");
  const int span = in + 2 * padding - kernel;
  if (span < 0) throw ConfigError("window larger than padded input");
  return span / stride + 1;
}

template <typename T>
BasicLayerParams<T> BasicLayerParams<T>::conv(int in_channels, int out_channels, int kernel) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1) {
    throw ConfigError("conv layer needs positive channels and kernel");
  }
  BasicLayerParams<T> p;
  const Shape ws{out_channels, in_channels, kernel, kernel};
  const Shape bs{1, out_channels, 1, 1};
  p.weights = BasicTensor<T>(ws);
  p.bias = BasicTensor<T>(bs);
  p.grad_weights = BasicTensor<T>(ws);
  p.grad_bias = BasicTensor<T>(bs);
  p.mom_weights = BasicTensor<T>(ws);
  p.mom_bias = BasicTensor<T>(bs);
  return p;
}

template <typename T>
void BasicLayerParams<T>::zero_grad() {
  grad_weights.fill(T(0));
  grad_bias.fill(T(0));
}

template <typename T>
BasicTensor<T> conv2d_forward(const BasicTensor<T>& x, const BasicLayerParams<T>& p, int stride,
                              int padding) {
  const Shape os = conv_output_shape(x, p, stride, padding);
  BasicTensor<T> out(os);
  const int k = p.kernel();
  const Eigen::Index rows = static_cast<Eigen::Index>(x.shape().c) * k * k;
  const Eigen::Index ncols = static_cast<Eigen::Index>(os.h) * os.w;
  std::vector<T> cols(static_cast<std::size_t>(rows * ncols));
  ConstMatMap<T> wmat(p.weights.data().data(), os.c, rows);
  for (int n = 0; n < os.n; ++n) {
    im2col(x, n, k, stride, padding, os.h, os.w, cols.data());
    ConstMatMap<T> cmat(cols.data(), rows, ncols);
    MatMap<T> omat(out.plane(n, 0), os.c, ncols);
    omat.noalias() = wmat * cmat;
    for (int c = 0; c < os.c; ++c) omat.row(c).array() += p.bias[static_cast<std::size_t>(c)];
  }
  return out;
}

template <typename T>
BasicTensor<T> conv2d_backward(const BasicTensor<T>& x, BasicLayerParams<T>& p,
                               const BasicTensor<T>& grad_out, int stride, int padding) {
  const Shape os = conv_output_shape(x, p, stride, padding);
  require_same(grad_out.shape(), os, "conv2d_backward grad_out");
  require_same(p.grad_weights.shape(), p.weights.shape(), "conv2d_backward grad_weights");
  BasicTensor<T> gx(x.shape());
  const int k = p.kernel();
  const Eigen::Index rows = static_cast<Eigen::Index>(x.shape().c) * k * k;
  const Eigen::Index ncols = static_cast<Eigen::Index>(os.h) * os.w;
  std::vector<T> cols(static_cast<std::size_t>(rows * ncols));
  std::vector<T> gcols(cols.size());
  ConstMatMap<T> wmat(p.weights.data().data(), os.c, rows);
  MatMap<T> gw(p.grad_weights.data().data(), os.c, rows);
  for (int n = 0; n < os.n; ++n) {
    im2col(x, n, k, stride, padding, os.h, os.w, cols.data());
    ConstMatMap<T> cmat(cols.data(), rows, ncols);
    ConstMatMap<T> gomat(grad_out.plane(n, 0), os.c, ncols);
    gw.noalias() += gomat * cmat.transpose();
    for (int c = 0; c < os.c; ++c) {
      const T* g = grad_out.plane(n, c);
      T s = T(0);
      for (Eigen::Index i = 0; i < ncols; ++i) s += g[i];
      p.grad_bias[static_cast<std::size_t>(c)] += s;
    }
    MatMap<T> gcmat(gcols.data(), rows, ncols);
    gcmat.noalias() = wmat.transpose() * gomat;
    col2im_add(gcols.data(), n, k, stride, padding, os.h, os.w, gx);
  }
  return gx;
}

template <typename T>
BasicTensor<T> relu_forward(const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
  return out;
}

template <typename T>
BasicTensor<T> relu_backward(const BasicTensor<T>& x, const BasicTensor<T>& grad_out) {
  require_same(x.shape(), grad_out.shape(), "relu_backward");
  BasicTensor<T> gx(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) gx[i] = x[i] > T(0) ? grad_out[i] : T(0);
  return gx;
}

template <typename T>
MaxPoolResult<T> maxpool2d_forward(const BasicTensor<T>& x, const PoolGeometry& g) {
  check_pool_geometry(g);
  const Shape& s = x.shape();
  const Shape os{s.n, s.c, output_extent(s.h, g.kernel, g.stride, g.padding),
                 output_extent(s.w, g.kernel, g.stride, g.padding)};
  MaxPoolResult<T> r{BasicTensor<T>(os), std::vector<std::int64_t>(os.numel())};
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const std::size_t base = x.offset(n, c, 0, 0);
      for (int oy = 0; oy < os.h; ++oy) {
        const WindowSpan wy = window_span(oy, s.h, g.kernel, g.stride, g.padding);
        for (int ox = 0; ox < os.w; ++ox, ++o) {
          const WindowSpan wx = window_span(ox, s.w, g.kernel, g.stride, g.padding);
          if (wy.begin >= wy.end || wx.begin >= wx.end) {
            throw ConfigError("maxpool2d: window with no valid positions");
          }
          std::size_t best = base + static_cast<std::size_t>(wy.begin) * s.w + wx.begin;
          T best_v = x[best];
          for (int y = wy.begin; y < wy.end; ++y) {
            for (int xx = wx.begin; xx < wx.end; ++xx) {
              const std::size_t idx = base + static_cast<std::size_t>(y) * s.w + xx;
              if (x[idx] > best_v) {
                best_v = x[idx];
                best = idx;
              }
            }
          }
          r.out[o] = best_v;
          r.argmax[o] = static_cast<std::int64_t>(best);
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maxpool2d_backward(const Shape& input_shape, std::span<const std::int64_t> argmax,
                                  const BasicTensor<T>& grad_out) {
  if (argmax.size() != grad_out.size()) {
    throw ConfigError("maxpool2d_backward: argmax record does not match grad_out");
  }
  BasicTensor<T> gx(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    const auto idx = static_cast<std::size_t>(argmax[i]);
    if (idx >= gx.size()) throw ConfigError("maxpool2d_backward: argmax out of range");
    gx[idx] += grad_out[i];
  }
  return gx;
}

template <typename T>
BasicTensor<T> avgpool2d_forward(const BasicTensor<T>& x, const PoolGeometry& g) {
  check_pool_geometry(g);
  const Shape& s = x.shape();
  const Shape os{s.n, s.c, output_extent(s.h, g.kernel, g.stride, g.padding),
                 output_extent(s.w, g.kernel, g.stride, g.padding)};
  BasicTensor<T> out(os);
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* src = x.plane(n, c);
      for (int oy = 0; oy < os.h; ++oy) {
        const WindowSpan wy = window_span(oy, s.h, g.kernel, g.stride, g.padding);
        for (int ox = 0; ox < os.w; ++ox, ++o) {
          const WindowSpan wx = window_span(ox, s.w, g.kernel, g.stride, g.padding);
          const int count = (wy.end - wy.begin) * (wx.end - wx.begin);
          if (wy.begin >= wy.end || wx.begin >= wx.end) {
            throw ConfigError("avgpool2d: window with no valid positions");
          }
          double sum = 0.0;
          for (int y = wy.begin; y < wy.end; ++y) {
            for (int xx = wx.begin; xx < wx.end; ++xx) sum += src[y * s.w + xx];
          }
          out[o] = static_cast<T>(sum / count);
        }
      }
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> avgpool2d_backward(const Shape& input_shape, const BasicTensor<T>& grad_out,
                                  const PoolGeometry& g) {
  check_pool_geometry(g);
  const Shape os{input_shape.n, input_shape.c,
                 output_extent(input_shape.h, g.kernel, g.stride, g.padding),
                 output_extent(input_shape.w, g.kernel, g.stride, g.padding)};
  require_same(grad_out.shape(), os, "avgpool2d_backward grad_out");
  BasicTensor<T> gx(input_shape);
  std::size_t o = 0;
  for (int n = 0; n < os.n; ++n) {
    for (int c = 0; c < os.c; ++c) {
      T* dst = gx.plane(n, c);
      for (int oy = 0; oy < os.h; ++oy) {
        const WindowSpan wy = window_span(oy, input_shape.h, g.kernel, g.stride, g.padding);
        for (int ox = 0; ox < os.w; ++ox, ++o) {
          const WindowSpan wx = window_span(ox, input_shape.w, g.kernel, g.stride, g.padding);
          const int count = (wy.end - wy.begin) * (wx.end - wx.begin);
          if (count <= 0) throw ConfigError("avgpool2d: window with no valid positions");
          const T share = grad_out[o] / static_cast<T>(count);
          for (int y = wy.begin; y < wy.end; ++y) {
            for (int xx = wx.begin; xx < wx.end; ++xx) dst[y * input_shape.w + xx] += share;
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
LossResult<T> loss_bce_logits(const BasicTensor<T>& logits, const BasicTensor<T>& targets) {
  require_same(logits.shape(), targets.shape(), "loss_bce_logits");
  LossResult<T> r{0.0, BasicTensor<T>(logits.shape())};
  if (logits.empty()) return r;
  const double inv = 1.0 / static_cast<double>(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    const double t = targets[i];
    // max(z, 0) - z t + log(1 + exp(-|z|))
    total += std::max(z, 0.0) - z * t + std::log1p(std::exp(-std::abs(z)));
    const double sig = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    r.grad[i] = static_cast<T>((sig - t) * inv);
  }
  r.loss = total * inv;
  return r;
}

template <typename T>
LossResult<T> loss_softmax_ce(const BasicTensor<T>& logits, std::span<const int> class_targets,
                              std::span<const std::uint8_t> valid_mask) {
  const Shape& s = logits.shape();
  const std::size_t cells = static_cast<std::size_t>(s.n) * s.h * s.w;
  if (class_targets.size() != cells || valid_mask.size() != cells) {
    throw ConfigError("loss_softmax_ce: targets/mask must have n*h*w entries");
  }
  LossResult<T> r{0.0, BasicTensor<T>(s)};
  std::size_t valid = 0;
  for (std::uint8_t v : valid_mask) valid += v ? 1 : 0;
  if (valid == 0) return r;
  const double inv = 1.0 / static_cast<double>(valid);
  const std::size_t plane = s.plane();
  std::vector<double> prob(static_cast<std::size_t>(s.c));
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      const std::size_t cell = static_cast<std::size_t>(n) * plane + p;
      if (!valid_mask[cell]) continue;
      const int target = class_targets[cell];
      if (target < 0 || target >= s.c) throw ConfigError("loss_softmax_ce: class target out of range");
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < s.c; ++c) mx = std::max(mx, static_cast<double>(logits.plane(n, c)[p]));
      double z = 0.0;
      for (int c = 0; c < s.c; ++c) {
        prob[c] = std::exp(static_cast<double>(logits.plane(n, c)[p]) - mx);
        z += prob[c];
      }
      total += std::log(z) + mx - static_cast<double>(logits.plane(n, target)[p]);
      for (int c = 0; c < s.c; ++c) {
        const double g = prob[c] / z - (c == target ? 1.0 : 0.0);
        r.grad.plane(n, c)[p] = static_cast<T>(g * inv);
      }
    }
  }
  r.loss = total * inv;
  return r;
}

template <typename T>
LossResult<T> loss_smooth_l1(const BasicTensor<T>& pred, const BasicTensor<T>& target,
                             std::span<const std::uint8_t> valid_mask, double beta) {
  require_same(pred.shape(), target.shape(), "loss_smooth_l1");
  const Shape& s = pred.shape();
  const std::size_t plane = s.plane();
  if (valid_mask.size() != static_cast<std::size_t>(s.n) * plane) {
    throw ConfigError("loss_smooth_l1: mask must have n*h*w entries");
  }
  if (!(beta > 0.0)) throw ConfigError("loss_smooth_l1: beta must be positive");
  LossResult<T> r{0.0, BasicTensor<T>(s)};
  std::size_t valid = 0;
  for (std::uint8_t v : valid_mask) valid += v ? 1 : 0;
  if (valid == 0) return r;
  const double inv = 1.0 / (static_cast<double>(valid) * s.c);
  double total = 0.0;
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const T* pp = pred.plane(n, c);
      const T* tp = target.plane(n, c);
      T* gp = r.grad.plane(n, c);
      for (std::size_t p = 0; p < plane; ++p) {
        if (!valid_mask[static_cast<std::size_t>(n) * plane + p]) continue;
        const double d = static_cast<double>(pp[p]) - static_cast<double>(tp[p]);
        const double ad = std::abs(d);
        if (ad < beta) {
          total += 0.5 * d * d / beta;
          gp[p] = static_cast<T>(d / beta * inv);
        } else {
          total += ad - 0.5 * beta;
          gp[p] = static_cast<T>((d > 0 ? 1.0 : -1.0) * inv);
        }
      }
    }
  }
  r.loss = total * inv;
  return r;
}

#define MPLAB_INSTANTIATE_LAYERS(T)                                                              \
  template struct BasicLayerParams<T>;                                                           \
  template BasicTensor<T> conv2d_forward(const BasicTensor<T>&, const BasicLayerParams<T>&, int, \
                                         int);                                                   \
  template BasicTensor<T> conv2d_backward(const BasicTensor<T>&, BasicLayerParams<T>&,           \
                                          const BasicTensor<T>&, int, int);                      \
  template BasicTensor<T> relu_forward(const BasicTensor<T>&);                                   \
  template BasicTensor<T> relu_backward(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template MaxPoolResult<T> maxpool2d_forward(const BasicTensor<T>&, const PoolGeometry&);       \
  template BasicTensor<T> maxpool2d_backward(const Shape&, std::span<const std::int64_t>,        \
                                             const BasicTensor<T>&);                             \
  template BasicTensor<T> avgpool2d_forward(const BasicTensor<T>&, const PoolGeometry&);         \
  template BasicTensor<T> avgpool2d_backward(const Shape&, const BasicTensor<T>&,                \
                                             const PoolGeometry&);                               \
  template LossResult<T> loss_bce_logits(const BasicTensor<T>&, const BasicTensor<T>&);          \
  template LossResult<T> loss_softmax_ce(const BasicTensor<T>&, std::span<const int>,            \
                                         std::span<const std::uint8_t>);                         \
  template LossResult<T> loss_smooth_l1(const BasicTensor<T>&, const BasicTensor<T>&,            \
                                        std::span<const std::uint8_t>, double);

MPLAB_INSTANTIATE_LAYERS(float)
MPLAB_INSTANTIATE_LAYERS(double)

#undef MPLAB_INSTANTIATE_LAYERS

}  // namespace mplab::nn
