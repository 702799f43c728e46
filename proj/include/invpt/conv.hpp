#pragma once

#include <algorithm>
#include <cmath>

#include "invpt/autograd.hpp"
#include "invpt/ops.hpp"
#include "invpt/tensor.hpp"

namespace invpt {

/// 2-D cross-correlation (no kernel flip) over NCHW with zero padding.
/// x: [N,C,H,W], w: [O,C,k,k], b: [O] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride = 1,
                 int64_t pad = 0) {
  require_shape(x.rank() == 4 && w.rank() == 4, "conv2d: x must be NCHW, w must be OCkk");
  require_shape(w.extent(2) == w.extent(3), "conv2d: square kernels only");
  require_shape(x.extent(1) == w.extent(1), "conv2d: channel mismatch");
  require_shape(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), width = x.extent(3);
  const int64_t o = w.extent(0), k = w.extent(2);
  require_shape(k <= h + 2 * pad && k <= width + 2 * pad, "conv2d: kernel larger than padded input");
  const int64_t oh = (h + 2 * pad - k) / stride + 1;
  const int64_t ow = (width + 2 * pad - k) / stride + 1;
  require_shape(oh >= 1 && ow >= 1, "conv2d: empty output");
  if (b.defined()) require_shape(b.rank() == 1 && b.extent(0) == o, "conv2d: bias extent mismatch");

  Tensor<T> out({n, o, oh, ow});
  auto ov = out.mutable_values();
  auto xv = x.values();
  auto wv = w.values();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t io = 0; io < o; ++io) {
      const T bias = b.defined() ? b.values()[io] : T(0);
      for (int64_t y = 0; y < oh; ++y) {
        for (int64_t xx = 0; xx < ow; ++xx) {
          T acc = bias;
          const int64_t y0 = y * stride - pad;
          const int64_t x0 = xx * stride - pad;
          for (int64_t ic = 0; ic < c; ++ic) {
            const T* xplane = xv.data() + ((in * c + ic) * h) * width;
            const T* wplane = wv.data() + ((io * c + ic) * k) * k;
            for (int64_t ky = 0; ky < k; ++ky) {
              const int64_t sy = y0 + ky;
              if (sy < 0 || sy >= h) continue;
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t sx = x0 + kx;
                if (sx < 0 || sx >= width) continue;
                acc += xplane[sy * width + sx] * wplane[ky * k + kx];
              }
            }
          }
          ov[((in * o + io) * oh + y) * ow + xx] = acc;
        }
      }
    }
  }
  check_finite(out, "conv2d");

  bool needs = x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
  if (Tape<T>::active() && needs) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x, w, b, out, n, c, h, width, o, k, oh, ow, stride, pad]() mutable {
      auto g = out.grad_view();
      if (g.empty()) return;
      auto xv2 = x.values();
      auto wv2 = w.values();
      const bool need_x = x.requires_grad();
      const bool need_w = w.requires_grad();
      const bool need_b = b.defined() && b.requires_grad();
      T* xg = need_x ? x.grad().data() : nullptr;
      T* wg = need_w ? w.grad().data() : nullptr;
      T* bg = need_b ? b.grad().data() : nullptr;
      for (int64_t in = 0; in < n; ++in) {
        for (int64_t io = 0; io < o; ++io) {
          for (int64_t y = 0; y < oh; ++y) {
            for (int64_t xx = 0; xx < ow; ++xx) {
              const T go = g[((in * o + io) * oh + y) * ow + xx];
              if (go == T(0)) continue;
              if (need_b) bg[io] += go;
              const int64_t y0 = y * stride - pad;
              const int64_t x0 = xx * stride - pad;
              for (int64_t ic = 0; ic < c; ++ic) {
                const int64_t xbase = ((in * c + ic) * h) * width;
                const int64_t wbase = ((io * c + ic) * k) * k;
                for (int64_t ky = 0; ky < k; ++ky) {
                  const int64_t sy = y0 + ky;
                  if (sy < 0 || sy >= h) continue;
                  for (int64_t kx = 0; kx < k; ++kx) {
                    const int64_t sx = x0 + kx;
                    if (sx < 0 || sx >= width) continue;
                    if (need_x) xg[xbase + sy * width + sx] += go * wv2[wbase + ky * k + kx];
                    if (need_w) wg[wbase + ky * k + kx] += go * xv2[xbase + sy * width + sx];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

/// Transposed convolution restricted to kernel == stride in {2, 4}; output
/// windows never overlap, so it is a per-pixel outer product with the kernel.
/// x: [N,C,H,W], w: [C,O,k,k], b: [O] or undefined.
template <typename T>
Tensor<T> transposed_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int64_t stride) {
  require_shape(x.rank() == 4 && w.rank() == 4, "transposed_conv2d: x must be NCHW, w must be COkk");
  require_shape(w.extent(2) == w.extent(3) && w.extent(2) == stride,
                "transposed_conv2d: kernel must equal stride");
  require_shape(stride == 2 || stride == 4, "transposed_conv2d: unsupported kernel/stride combination");
  require_shape(x.extent(1) == w.extent(0), "transposed_conv2d: channel mismatch");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), width = x.extent(3);
  const int64_t o = w.extent(1), k = stride;
  if (b.defined()) require_shape(b.rank() == 1 && b.extent(0) == o, "transposed_conv2d: bias extent mismatch");

  Tensor<T> out({n, o, h * k, width * k});
  auto ov = out.mutable_values();
  auto xv = x.values();
  auto wv = w.values();
  const int64_t oh = h * k, ow = width * k;
  if (b.defined()) {
    for (int64_t in = 0; in < n; ++in) {
      for (int64_t io = 0; io < o; ++io) {
        T* plane = ov.data() + ((in * o + io) * oh) * ow;
        const T bias = b.values()[io];
        for (int64_t i = 0; i < oh * ow; ++i) plane[i] = bias;
      }
    }
  }
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ic = 0; ic < c; ++ic) {
      const T* xplane = xv.data() + ((in * c + ic) * h) * width;
      for (int64_t io = 0; io < o; ++io) {
        const T* wpatch = wv.data() + ((ic * o + io) * k) * k;
        T* oplane = ov.data() + ((in * o + io) * oh) * ow;
        for (int64_t y = 0; y < h; ++y) {
          for (int64_t xx = 0; xx < width; ++xx) {
            const T v = xplane[y * width + xx];
            if (v == T(0)) continue;
            for (int64_t ky = 0; ky < k; ++ky) {
              T* orow = oplane + (y * k + ky) * ow + xx * k;
              for (int64_t kx = 0; kx < k; ++kx) orow[kx] += v * wpatch[ky * k + kx];
            }
          }
        }
      }
    }
  }
  check_finite(out, "transposed_conv2d");

  bool needs = x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad());
  if (Tape<T>::active() && needs) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([x, w, b, out, n, c, h, width, o, k]() mutable {
      auto g = out.grad_view();
      if (g.empty()) return;
      auto xv2 = x.values();
      auto wv2 = w.values();
      const bool need_x = x.requires_grad();
      const bool need_w = w.requires_grad();
      T* xg = need_x ? x.grad().data() : nullptr;
      T* wg = need_w ? w.grad().data() : nullptr;
      const int64_t oh = h * k, ow = width * k;
      for (int64_t in = 0; in < n; ++in) {
        for (int64_t ic = 0; ic < c; ++ic) {
          const int64_t xbase = ((in * c + ic) * h) * width;
          for (int64_t io = 0; io < o; ++io) {
            const int64_t wbase = ((ic * o + io) * k) * k;
            const T* gplane = g.data() + ((in * o + io) * oh) * ow;
            for (int64_t y = 0; y < h; ++y) {
              for (int64_t xx = 0; xx < width; ++xx) {
                const T xval = xv2[xbase + y * width + xx];
                T xacc = 0;
                for (int64_t ky = 0; ky < k; ++ky) {
                  const T* grow = gplane + (y * k + ky) * ow + xx * k;
                  for (int64_t kx = 0; kx < k; ++kx) {
                    xacc += grow[kx] * wv2[wbase + ky * k + kx];
                    if (need_w) wg[wbase + ky * k + kx] += grow[kx] * xval;
                  }
                }
                if (need_x) xg[xbase + y * width + xx] += xacc;
              }
            }
          }
        }
      }
      if (b.defined() && b.requires_grad()) {
        auto bg = b.grad();
        for (int64_t in = 0; in < n; ++in) {
          for (int64_t io = 0; io < o; ++io) {
            const T* gplane = g.data() + ((in * o + io) * oh) * ow;
            T acc = 0;
            for (int64_t i = 0; i < oh * ow; ++i) acc += gplane[i];
            bg[io] += acc;
          }
        }
      }
    });
  }
  return out;
}

/// Non-overlapping k x k window means; extents must divide by k.
template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, int64_t k) {
  require_shape(x.rank() == 4, "avg_pool2d: NCHW tensor expected");
  require_shape(k >= 1, "avg_pool2d: bad kernel");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  require_shape(h % k == 0 && w % k == 0, "avg_pool2d: extent not divisible by kernel " + std::to_string(k));
  const int64_t oh = h / k, ow = w / k;
  const T inv = T(1) / static_cast<T>(k * k);
  Tensor<T> out({n, c, oh, ow});
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* xplane = xv.data() + nc * h * w;
    T* oplane = ov.data() + nc * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t xx = 0; xx < ow; ++xx) {
        T acc = 0;
        for (int64_t ky = 0; ky < k; ++ky) {
          const T* row = xplane + (y * k + ky) * w + xx * k;
          for (int64_t kx = 0; kx < k; ++kx) acc += row[kx];
        }
        oplane[y * ow + xx] = acc * inv;
      }
    }
  }
  check_finite(out, "avg_pool2d");
  detail::record_op(out, {&x}, [x, out, n, c, h, w, k, oh, ow, inv]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto xg = x.grad();
    for (int64_t nc = 0; nc < n * c; ++nc) {
      const T* gplane = g.data() + nc * oh * ow;
      T* xplane = xg.data() + nc * h * w;
      for (int64_t y = 0; y < oh; ++y) {
        for (int64_t xx = 0; xx < ow; ++xx) {
          const T gv = gplane[y * ow + xx] * inv;
          for (int64_t ky = 0; ky < k; ++ky) {
            T* row = xplane + (y * k + ky) * w + xx * k;
            for (int64_t kx = 0; kx < k; ++kx) row[kx] += gv;
          }
        }
      }
    }
  });
  return out;
}

namespace detail {

/// Half-pixel-center source coordinates for 2x upsampling with border clamp.
struct Bilinear2xAxis {
  int64_t lo, hi;
  double frac;
};

inline Bilinear2xAxis bilinear2x_axis(int64_t dst, int64_t src_extent) {
  const double src = (static_cast<double>(dst) + 0.5) / 2.0 - 0.5;
  double f = std::floor(src);
  int64_t lo = static_cast<int64_t>(f);
  double frac = src - f;
  int64_t hi = lo + 1;
  if (lo < 0) lo = 0;
  if (hi < 0) hi = 0;
  if (lo > src_extent - 1) lo = src_extent - 1;
  if (hi > src_extent - 1) hi = src_extent - 1;
  return {lo, hi, frac};
}

}  // namespace detail

/// Bilinear 2x upsampling, half-pixel centers, clamped borders.
template <typename T>
Tensor<T> bilinear_upsample2x(const Tensor<T>& x) {
  require_shape(x.rank() == 4, "bilinear_upsample2x: NCHW tensor expected");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  require_shape(h >= 1 && w >= 1, "bilinear_upsample2x: empty spatial extent");
  const int64_t oh = 2 * h, ow = 2 * w;
  Tensor<T> out({n, c, oh, ow});
  auto ov = out.mutable_values();
  auto xv = x.values();
  std::vector<detail::Bilinear2xAxis> ys(static_cast<size_t>(oh)), xs(static_cast<size_t>(ow));
  for (int64_t i = 0; i < oh; ++i) ys[static_cast<size_t>(i)] = detail::bilinear2x_axis(i, h);
  for (int64_t i = 0; i < ow; ++i) xs[static_cast<size_t>(i)] = detail::bilinear2x_axis(i, w);
  for (int64_t nc = 0; nc < n * c; ++nc) {
    const T* xplane = xv.data() + nc * h * w;
    T* oplane = ov.data() + nc * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      const auto& ay = ys[static_cast<size_t>(y)];
      for (int64_t xx = 0; xx < ow; ++xx) {
        const auto& ax = xs[static_cast<size_t>(xx)];
        const T v00 = xplane[ay.lo * w + ax.lo];
        const T v01 = xplane[ay.lo * w + ax.hi];
        const T v10 = xplane[ay.hi * w + ax.lo];
        const T v11 = xplane[ay.hi * w + ax.hi];
        const T fy = static_cast<T>(ay.frac), fx = static_cast<T>(ax.frac);
        oplane[y * ow + xx] = (T(1) - fy) * ((T(1) - fx) * v00 + fx * v01) + fy * ((T(1) - fx) * v10 + fx * v11);
      }
    }
  }
  check_finite(out, "bilinear_upsample2x");
  detail::record_op(out, {&x}, [x, out, n, c, h, w, oh, ow, ys, xs]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto xg = x.grad();
    for (int64_t nc = 0; nc < n * c; ++nc) {
      const T* gplane = g.data() + nc * oh * ow;
      T* xplane = xg.data() + nc * h * w;
      for (int64_t y = 0; y < oh; ++y) {
        const auto& ay = ys[static_cast<size_t>(y)];
        for (int64_t xx = 0; xx < ow; ++xx) {
          const auto& ax = xs[static_cast<size_t>(xx)];
          const T gv = gplane[y * ow + xx];
          const T fy = static_cast<T>(ay.frac), fx = static_cast<T>(ax.frac);
          xplane[ay.lo * w + ax.lo] += gv * (T(1) - fy) * (T(1) - fx);
          xplane[ay.lo * w + ax.hi] += gv * (T(1) - fy) * fx;
          xplane[ay.hi * w + ax.lo] += gv * fy * (T(1) - fx);
          xplane[ay.hi * w + ax.hi] += gv * fy * fx;
        }
      }
    }
  });
  return out;
}

/// Repeated 2x bilinear upsampling; `factor` must be a power of two.
template <typename T>
Tensor<T> bilinear_upsample_pow2(const Tensor<T>& x, int64_t factor) {
  require_shape(factor >= 1 && (factor & (factor - 1)) == 0, "upsample factor must be a power of two");
  Tensor<T> cur = x;
  for (int64_t f = factor; f > 1; f /= 2) cur = bilinear_upsample2x(cur);
  return cur;
}

}  // namespace invpt
