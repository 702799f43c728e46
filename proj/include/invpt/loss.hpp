#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <vector>

#include "invpt/autograd.hpp"
#include "invpt/tensor.hpp"

namespace invpt {

/// Mean absolute error against a constant target.
template <typename T>
Tensor<T> l1_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  require_shape(pred.shape() == target.shape(), "l1_loss: shape mismatch");
  require_shape(pred.numel() > 0, "l1_loss: empty tensors");
  const int64_t n = pred.numel();
  auto pv = pred.values();
  auto tv = target.values();
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += std::abs(pv[i] - tv[i]);
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(n));
  check_finite(out, "l1_loss");
  detail::record_op(out, {&pred}, [pred, target, out, n]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    const T go = g[0] / static_cast<T>(n);
    auto pv2 = pred.values();
    auto tv2 = target.values();
    auto pg = pred.grad();
    for (int64_t i = 0; i < n; ++i) {
      const T d = pv2[i] - tv2[i];
      if (d > T(0)) pg[i] += go;
      else if (d < T(0)) pg[i] -= go;
    }
  });
  return out;
}

/// Mean per-pixel cross entropy over channel logits [N,K,H,W] against integer
/// labels (row-major over N,H,W). Pixels whose label equals `ignore` are
/// excluded from both the mean and the gradient.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int32_t>& labels, int32_t ignore = -1) {
  require_shape(logits.rank() == 4, "cross_entropy: NKHW logits expected");
  const int64_t n = logits.extent(0), k = logits.extent(1), h = logits.extent(2), w = logits.extent(3);
  require_shape(static_cast<int64_t>(labels.size()) == n * h * w, "cross_entropy: label count mismatch");
  auto lv = logits.values();
  auto shared_labels = std::make_shared<std::vector<int32_t>>(labels);

  int64_t valid = 0;
  T acc = 0;
  std::vector<T> logprob;  // stashed for backward: log softmax per pixel/class
  const bool want_grad = Tape<T>::active() && logits.requires_grad();
  if (want_grad) logprob.resize(static_cast<size_t>(n * k * h * w));
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t y = 0; y < h; ++y) {
      for (int64_t x = 0; x < w; ++x) {
        const int32_t lab = labels[static_cast<size_t>((in * h + y) * w + x)];
        if (lab == ignore && !want_grad) continue;
        T mx = lv[((in * k + 0) * h + y) * w + x];
        for (int64_t c = 1; c < k; ++c) mx = std::max(mx, lv[((in * k + c) * h + y) * w + x]);
        T denom = 0;
        for (int64_t c = 0; c < k; ++c) denom += std::exp(lv[((in * k + c) * h + y) * w + x] - mx);
        const T logz = std::log(denom) + mx;
        if (want_grad) {
          for (int64_t c = 0; c < k; ++c) {
            logprob[static_cast<size_t>(((in * k + c) * h + y) * w + x)] =
                lv[((in * k + c) * h + y) * w + x] - logz;
          }
        }
        if (lab == ignore) continue;
        if (lab < 0 || lab >= k) throw ShapeError("cross_entropy: label id out of range");
        ++valid;
        acc -= lv[((in * k + lab) * h + y) * w + x] - logz;
      }
    }
  }
  require_shape(valid > 0, "cross_entropy: no valid pixels");
  Tensor<T> out = Tensor<T>::scalar(acc / static_cast<T>(valid));
  check_finite(out, "cross_entropy");
  detail::record_op(out, {&logits},
                    [logits, out, shared_labels, n, k, h, w, valid, ignore, logprob = std::move(logprob)]() mutable {
                      auto g = out.grad_view();
                      if (g.empty()) return;
                      const T go = g[0] / static_cast<T>(valid);
                      auto lg = logits.grad();
                      const auto& labs = *shared_labels;
                      for (int64_t in = 0; in < n; ++in) {
                        for (int64_t y = 0; y < h; ++y) {
                          for (int64_t x = 0; x < w; ++x) {
                            const int32_t lab = labs[static_cast<size_t>((in * h + y) * w + x)];
                            if (lab == ignore) continue;
                            for (int64_t c = 0; c < k; ++c) {
                              const size_t idx = static_cast<size_t>(((in * k + c) * h + y) * w + x);
                              const T p = std::exp(logprob[idx]);
                              lg[idx] += go * (p - (c == lab ? T(1) : T(0)));
                            }
                          }
                        }
                      }
                    });
  return out;
}

}  // namespace invpt
