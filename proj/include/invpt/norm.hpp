#pragma once

#include <cmath>

#include "invpt/autograd.hpp"
#include "invpt/tensor.hpp"

namespace invpt {

/// Per-row normalization of a [r x c] matrix followed by a column-wise affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  require_shape(x.rank() == 2, "layer_norm: rank-2 tensor expected");
  const int64_t r = x.extent(0), c = x.extent(1);
  require_shape(c >= 1, "layer_norm: empty row dimension");
  require_shape(gamma.rank() == 1 && gamma.extent(0) == c, "layer_norm: gamma extent mismatch");
  require_shape(beta.rank() == 1 && beta.extent(0) == c, "layer_norm: beta extent mismatch");

  Tensor<T> out(x.shape());
  std::vector<T> inv_sigma(static_cast<size_t>(r));
  std::vector<T> xhat(static_cast<size_t>(r * c));
  auto ov = out.mutable_values();
  auto xv = x.values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (int64_t i = 0; i < r; ++i) {
    const T* row = xv.data() + i * c;
    T mu = 0;
    for (int64_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<T>(c);
    T var = 0;
    for (int64_t j = 0; j < c; ++j) {
      const T d = row[j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(c);
    const T is = T(1) / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = is;
    for (int64_t j = 0; j < c; ++j) {
      const T xh = (row[j] - mu) * is;
      xhat[static_cast<size_t>(i * c + j)] = xh;
      ov[i * c + j] = gv[j] * xh + bv[j];
    }
  }
  check_finite(out, "layer_norm");
  detail::record_op(out, {&x, &gamma, &beta},
                    [x, gamma, beta, out, r, c, inv_sigma = std::move(inv_sigma), xhat = std::move(xhat)]() mutable {
                      auto g = out.grad_view();
                      if (g.empty()) return;
                      auto gv2 = gamma.values();
                      const bool need_x = x.requires_grad();
                      const bool need_g = gamma.requires_grad();
                      const bool need_b = beta.requires_grad();
                      T* xg = need_x ? x.grad().data() : nullptr;
                      T* gg = need_g ? gamma.grad().data() : nullptr;
                      T* bg = need_b ? beta.grad().data() : nullptr;
                      for (int64_t i = 0; i < r; ++i) {
                        const T* grow = g.data() + i * c;
                        const T* xh = xhat.data() + i * c;
                        if (need_g || need_b) {
                          for (int64_t j = 0; j < c; ++j) {
                            if (need_g) gg[j] += grow[j] * xh[j];
                            if (need_b) bg[j] += grow[j];
                          }
                        }
                        if (need_x) {
                          T s1 = 0, s2 = 0;
                          for (int64_t j = 0; j < c; ++j) {
                            const T dxh = grow[j] * gv2[j];
                            s1 += dxh;
                            s2 += dxh * xh[j];
                          }
                          const T invc = T(1) / static_cast<T>(c);
                          const T is = inv_sigma[static_cast<size_t>(i)];
                          for (int64_t j = 0; j < c; ++j) {
                            const T dxh = grow[j] * gv2[j];
                            xg[i * c + j] += is * (dxh - s1 * invc - xh[j] * s2 * invc);
                          }
                        }
                      }
                    });
  return out;
}

/// Per-channel batch normalization over (N, H, W). In training mode the batch
/// statistics normalize the input and the running stats are updated with
/// momentum; in eval mode the running stats normalize. Running buffers hold
/// the unbiased variance.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, T momentum, bool training,
                       T eps = T(1e-5)) {
  require_shape(x.rank() == 4, "batch_norm2d: NCHW tensor expected");
  const int64_t n = x.extent(0), c = x.extent(1), h = x.extent(2), w = x.extent(3);
  require_shape(gamma.rank() == 1 && gamma.extent(0) == c, "batch_norm2d: gamma extent mismatch");
  require_shape(beta.rank() == 1 && beta.extent(0) == c, "batch_norm2d: beta extent mismatch");
  require_shape(running_mean.extent(0) == c && running_var.extent(0) == c,
                "batch_norm2d: running stat extent mismatch");
  const int64_t m = n * h * w;  // elements per channel
  if (training) require_shape(m >= 2, "batch_norm2d: train mode needs at least 2 elements per channel");

  std::vector<T> mu(static_cast<size_t>(c)), inv_sigma(static_cast<size_t>(c));
  auto xv = x.values();
  if (training) {
    auto rm = running_mean.mutable_values();
    auto rv = running_var.mutable_values();
    for (int64_t ic = 0; ic < c; ++ic) {
      T s = 0;
      for (int64_t in = 0; in < n; ++in) {
        const T* plane = xv.data() + ((in * c + ic) * h) * w;
        for (int64_t i = 0; i < h * w; ++i) s += plane[i];
      }
      const T mean_c = s / static_cast<T>(m);
      T var_c = 0;
      for (int64_t in = 0; in < n; ++in) {
        const T* plane = xv.data() + ((in * c + ic) * h) * w;
        for (int64_t i = 0; i < h * w; ++i) {
          const T d = plane[i] - mean_c;
          var_c += d * d;
        }
      }
      const T biased = var_c / static_cast<T>(m);
      const T unbiased = var_c / static_cast<T>(m - 1);
      mu[static_cast<size_t>(ic)] = mean_c;
      inv_sigma[static_cast<size_t>(ic)] = T(1) / std::sqrt(biased + eps);
      rm[ic] = (T(1) - momentum) * rm[ic] + momentum * mean_c;
      rv[ic] = (T(1) - momentum) * rv[ic] + momentum * unbiased;
    }
  } else {
    auto rm = running_mean.values();
    auto rv = running_var.values();
    for (int64_t ic = 0; ic < c; ++ic) {
      mu[static_cast<size_t>(ic)] = rm[ic];
      inv_sigma[static_cast<size_t>(ic)] = T(1) / std::sqrt(rv[ic] + eps);
    }
  }

  Tensor<T> out(x.shape());
  auto ov = out.mutable_values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t ic = 0; ic < c; ++ic) {
      const T* plane = xv.data() + ((in * c + ic) * h) * w;
      T* oplane = ov.data() + ((in * c + ic) * h) * w;
      const T mc = mu[static_cast<size_t>(ic)], is = inv_sigma[static_cast<size_t>(ic)];
      for (int64_t i = 0; i < h * w; ++i) oplane[i] = gv[ic] * (plane[i] - mc) * is + bv[ic];
    }
  }
  check_finite(out, "batch_norm2d");

  detail::record_op(
      out, {&x, &gamma, &beta},
      [x, gamma, beta, out, n, c, h, w, m, training, mu = std::move(mu), inv_sigma = std::move(inv_sigma)]() mutable {
        auto g = out.grad_view();
        if (g.empty()) return;
        auto xv2 = x.values();
        auto gv2 = gamma.values();
        const bool need_x = x.requires_grad();
        const bool need_g = gamma.requires_grad();
        const bool need_b = beta.requires_grad();
        T* xg = need_x ? x.grad().data() : nullptr;
        T* gg = need_g ? gamma.grad().data() : nullptr;
        T* bg = need_b ? beta.grad().data() : nullptr;
        const int64_t plane_sz = h * w;
        for (int64_t ic = 0; ic < c; ++ic) {
          const T mc = mu[static_cast<size_t>(ic)], is = inv_sigma[static_cast<size_t>(ic)];
          T sum_g = 0, sum_gxh = 0;
          for (int64_t in = 0; in < n; ++in) {
            const T* gplane = g.data() + ((in * c + ic) * h) * w;
            const T* xplane = xv2.data() + ((in * c + ic) * h) * w;
            for (int64_t i = 0; i < plane_sz; ++i) {
              sum_g += gplane[i];
              sum_gxh += gplane[i] * (xplane[i] - mc) * is;
            }
          }
          if (need_g) gg[ic] += sum_gxh;
          if (need_b) bg[ic] += sum_g;
          if (!need_x) continue;
          if (training) {
            const T invm = T(1) / static_cast<T>(m);
            for (int64_t in = 0; in < n; ++in) {
              const T* gplane = g.data() + ((in * c + ic) * h) * w;
              const T* xplane = xv2.data() + ((in * c + ic) * h) * w;
              T* xgplane = xg + ((in * c + ic) * h) * w;
              for (int64_t i = 0; i < plane_sz; ++i) {
                const T xh = (xplane[i] - mc) * is;
                xgplane[i] += gv2[ic] * is * (gplane[i] - sum_g * invm - xh * sum_gxh * invm);
              }
            }
          } else {
            for (int64_t in = 0; in < n; ++in) {
              const T* gplane = g.data() + ((in * c + ic) * h) * w;
              T* xgplane = xg + ((in * c + ic) * h) * w;
              for (int64_t i = 0; i < plane_sz; ++i) xgplane[i] += gv2[ic] * is * gplane[i];
            }
          }
        }
      });
  return out;
}

}  // namespace invpt
