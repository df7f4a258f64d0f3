#include "mplab/maskpool.hpp"

#include <algorithm>
#include <cmath>

namespace mplab::maskpool {

BinaryMask::BinaryMask(int height, int width, std::uint8_t fill)
    : height_(height), width_(width) {
  if (height < 0 || width < 0) throw ConfigError("mask extents must be non-negative");
  if (fill > 1) throw ValidationError("non-binary mask");
  values_.assign(static_cast<std::size_t>(height) * width, fill);
}

BinaryMask::BinaryMask(int height, int width, std::vector<std::uint8_t> values)
    : height_(height), width_(width), values_(std::move(values)) {
  if (height < 0 || width < 0) throw ConfigError("mask extents must be non-negative");
  if (values_.size() != static_cast<std::size_t>(height) * width) {
    throw ConfigError("mask value count does not match " + std::to_string(height) + "x" +
                      std::to_string(width));
  }
  for (std::uint8_t v : values_) {
    if (v > 1) throw ValidationError("non-binary mask");
  }
}

std::size_t BinaryMask::area() const {
  std::size_t a = 0;
  for (std::uint8_t v : values_) a += v;
  return a;
}

BinaryMask downsample_mask(const BinaryMask& m, int factor) {
  if (factor < 1) throw ConfigError("downsample factor must be >= 1");
  if (factor == 1) return m;
  const int oh = (m.height() + factor - 1) / factor;
  const int ow = (m.width() + factor - 1) / factor;
  BinaryMask out(oh, ow);
  for (int by = 0; by < oh; ++by) {
    for (int bx = 0; bx < ow; ++bx) {
      int fg = 0;
      int total = 0;
      const int y1 = std::min(m.height(), (by + 1) * factor);
      const int x1 = std::min(m.width(), (bx + 1) * factor);
      for (int y = by * factor; y < y1; ++y) {
        for (int x = bx * factor; x < x1; ++x) {
          fg += m.at(y, x);
          ++total;
        }
      }
      out.set(by, bx, fg >= total - fg);
    }
  }
  return out;
}

MaskPyramid::MaskPyramid(const BinaryMask& source, std::span<const int> strides) {
  levels_.push_back({1, source});
  std::vector<int> sorted(strides.begin(), strides.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int s : sorted) {
    if (s < 1) throw ConfigError("pyramid stride must be >= 1");
    if (s == 1) continue;
    levels_.push_back({s, downsample_mask(source, s)});
  }
}

const BinaryMask& MaskPyramid::at_stride(int stride) const {
  for (const auto& l : levels_) {
    if (l.stride == stride) return l.mask;
  }
  throw ConfigError("mask pyramid has no level at stride " + std::to_string(stride));
}

bool MaskPyramid::has_stride(int stride) const {
  return std::any_of(levels_.begin(), levels_.end(),
                     [stride](const Level& l) { return l.stride == stride; });
}

PoolWindowStats window_stats(const BinaryMask& m, int oy, int ox, const nn::PoolGeometry& g) {
  const nn::WindowSpan wy = nn::window_span(oy, m.height(), g.kernel, g.stride, g.padding);
  const nn::WindowSpan wx = nn::window_span(ox, m.width(), g.kernel, g.stride, g.padding);
  PoolWindowStats st;
  for (int y = wy.begin; y < wy.end; ++y) {
    for (int x = wx.begin; x < wx.end; ++x) {
      if (m.at(y, x)) {
        ++st.fg;
      } else {
        ++st.bg;
      }
    }
  }
  return st;
}

namespace {

void check_masks(const Shape& s, std::span<const BinaryMask> masks, const char* op) {
  if (masks.size() != static_cast<std::size_t>(s.n)) {
    throw ConfigError(std::string(op) + ": expected " + std::to_string(s.n) + " masks, got " +
                      std::to_string(masks.size()));
  }
  for (const auto& m : masks) {
    if (m.height() != s.h || m.width() != s.w) {
      throw ConfigError(std::string(op) + ": mask " + std::to_string(m.height()) + "x" +
                        std::to_string(m.width()) + " does not match feature map " +
                        std::to_string(s.h) + "x" + std::to_string(s.w));
    }
  }
}

}  // namespace

template <typename T>
MaskPoolResult<T> maskpool2d_forward(const BasicTensor<T>& x, std::span<const BinaryMask> masks,
                                     const nn::PoolGeometry& g) {
  const Shape& s = x.shape();
  check_masks(s, masks, "maskpool2d_forward");
  if (g.kernel < 1 || g.stride < 1 || g.padding < 0) {
    throw ConfigError("maskpool2d: kernel >= 1, stride >= 1, padding >= 0 required");
  }
  const Shape os{s.n, s.c, nn::output_extent(s.h, g.kernel, g.stride, g.padding),
                 nn::output_extent(s.w, g.kernel, g.stride, g.padding)};
  MaskPoolResult<T> r;
  r.out = BasicTensor<T>(os);
  r.record.input_shape = s;
  r.record.output_shape = os;
  r.record.geometry = g;
  const std::size_t windows = static_cast<std::size_t>(os.n) * os.h * os.w;
  r.record.fg_branch.resize(windows);
  r.record.selected_count.resize(windows);

  for (int n = 0; n < s.n; ++n) {
    const BinaryMask& m = masks[static_cast<std::size_t>(n)];
    for (int oy = 0; oy < os.h; ++oy) {
      const nn::WindowSpan wy = nn::window_span(oy, s.h, g.kernel, g.stride, g.padding);
      for (int ox = 0; ox < os.w; ++ox) {
        const nn::WindowSpan wx = nn::window_span(ox, s.w, g.kernel, g.stride, g.padding);
        const PoolWindowStats st = window_stats(m, oy, ox, g);
        if (st.fg + st.bg == 0) throw ConfigError("maskpool2d: window with no valid pixels");
        const bool fg_branch = st.fg >= st.bg;
        const std::uint8_t want = fg_branch ? 1 : 0;
        const int count = fg_branch ? st.fg : st.bg;
        const std::size_t wi = (static_cast<std::size_t>(n) * os.h + oy) * os.w + ox;
        r.record.fg_branch[wi] = want;
        r.record.selected_count[wi] = count;
        for (int c = 0; c < s.c; ++c) {
          const T* src = x.plane(n, c);
          double sum = 0.0;
          for (int y = wy.begin; y < wy.end; ++y) {
            for (int xx = wx.begin; xx < wx.end; ++xx) {
              if (m.at(y, xx) == want) sum += src[y * s.w + xx];
            }
          }
          r.out.plane(n, c)[oy * os.w + ox] = static_cast<T>(sum / count);
        }
      }
    }
  }
  return r;
}

template <typename T>
BasicTensor<T> maskpool2d_backward(std::span<const BinaryMask> masks,
                                   const BasicTensor<T>& grad_out, const MaskPoolRecord& record) {
  if (record.empty()) throw ConfigError("maskpool2d_backward: missing branch record");
  const Shape& s = record.input_shape;
  const Shape& os = record.output_shape;
  if (!(grad_out.shape() == os)) {
    throw ConfigError("maskpool2d_backward: grad_out shape " + to_string(grad_out.shape()) +
                      " does not match recorded output " + to_string(os));
  }
  if (record.fg_branch.size() != static_cast<std::size_t>(os.n) * os.h * os.w) {
    throw ConfigError("maskpool2d_backward: corrupt branch record");
  }
  check_masks(s, masks, "maskpool2d_backward");
  const nn::PoolGeometry& g = record.geometry;
  BasicTensor<T> gx(s);
  for (int n = 0; n < s.n; ++n) {
    const BinaryMask& m = masks[static_cast<std::size_t>(n)];
    for (int oy = 0; oy < os.h; ++oy) {
      const nn::WindowSpan wy = nn::window_span(oy, s.h, g.kernel, g.stride, g.padding);
      for (int ox = 0; ox < os.w; ++ox) {
        const nn::WindowSpan wx = nn::window_span(ox, s.w, g.kernel, g.stride, g.padding);
        const std::size_t wi = (static_cast<std::size_t>(n) * os.h + oy) * os.w + ox;
        const std::uint8_t want = record.fg_branch[wi];
        const T inv = T(1) / static_cast<T>(record.selected_count[wi]);
        for (int c = 0; c < s.c; ++c) {
          const T share = grad_out.plane(n, c)[oy * os.w + ox] * inv;
          T* dst = gx.plane(n, c);
          for (int y = wy.begin; y < wy.end; ++y) {
            for (int xx = wx.begin; xx < wx.end; ++xx) {
              if (m.at(y, xx) == want) dst[y * s.w + xx] += share;
            }
          }
        }
      }
    }
  }
  return gx;
}

template <typename T>
BasicTensor<T> bg_scale(const BasicTensor<T>& x, std::span<const BinaryMask> masks, T weight) {
  const Shape& s = x.shape();
  check_masks(s, masks, "bg_scale");
  BasicTensor<T> out = x;
  for (int n = 0; n < s.n; ++n) {
    const auto mv = masks[static_cast<std::size_t>(n)].values();
    for (int c = 0; c < s.c; ++c) {
      T* p = out.plane(n, c);
      for (std::size_t i = 0; i < mv.size(); ++i) {
        if (!mv[i]) p[i] *= weight;
      }
    }
  }
  return out;
}

namespace {

template <bool Dilate>
BinaryMask morph_step(const BinaryMask& m) {
  const int h = m.height();
  const int w = m.width();
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      bool any = false;
      bool all = true;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy;
          const int xx = x + dx;
          const bool v = yy >= 0 && yy < h && xx >= 0 && xx < w && m.at(yy, xx);
          any = any || v;
          all = all && v;
        }
      }
      out.set(y, x, Dilate ? any : all);
    }
  }
  return out;
}

}  // namespace

BinaryMask dilate3x3(const BinaryMask& m) { return morph_step<true>(m); }
BinaryMask erode3x3(const BinaryMask& m) { return morph_step<false>(m); }

BinaryMask morph_perturb(const BinaryMask& m, MorphMode mode, double area_factor) {
  if (area_factor == 1.0) throw ConfigError("morph_perturb: area_factor 1 is a no-op");
  if (mode == MorphMode::dilate && !(area_factor > 1.0)) {
    throw ConfigError("morph_perturb: dilation needs area_factor > 1");
  }
  if (mode == MorphMode::erode && !(area_factor > 0.0 && area_factor < 1.0)) {
    throw ConfigError("morph_perturb: erosion needs 0 < area_factor < 1");
  }
  const std::size_t original = m.area();
  if (original == 0) return m;
  const double target = area_factor * static_cast<double>(original);
  BinaryMask cur = m;
  for (;;) {
    BinaryMask next = mode == MorphMode::dilate ? dilate3x3(cur) : erode3x3(cur);
    const auto area = static_cast<double>(next.area());
    const bool reached = mode == MorphMode::dilate ? area >= target : area <= target;
    if (reached || next == cur) return next;
    cur = std::move(next);
  }
}

template MaskPoolResult<float> maskpool2d_forward(const Tensor&, std::span<const BinaryMask>,
                                                  const nn::PoolGeometry&);
template MaskPoolResult<double> maskpool2d_forward(const TensorD&, std::span<const BinaryMask>,
                                                   const nn::PoolGeometry&);
template Tensor maskpool2d_backward(std::span<const BinaryMask>, const Tensor&,
                                    const MaskPoolRecord&);
template TensorD maskpool2d_backward(std::span<const BinaryMask>, const TensorD&,
                                     const MaskPoolRecord&);
template Tensor bg_scale(const Tensor&, std::span<const BinaryMask>, float);
template TensorD bg_scale(const TensorD&, std::span<const BinaryMask>, double);

}  // namespace mplab::maskpool
