#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "invpt/params.hpp"

namespace invpt {

template <typename T>
struct AdamConfig {
  T lr = T(1e-3);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  T weight_decay = T(1e-6);
};

/// Adam with bias correction and decoupled weight decay. The decay shrinks
/// the parameter before the moment update, so the moments never see it.
template <typename T>
class Adam {
 public:
  explicit Adam(const AdamConfig<T>& cfg) : cfg_(cfg) {}

  int64_t step_count() const { return t_; }

  void step(ParamStore<T>& params, T lr) {
    if (lr <= T(0)) throw std::invalid_argument("adam: learning rate must be positive");
    if (slots_.empty()) {
      for (const auto& e : params.entries()) {
        slots_.emplace_back();
        if (e.trainable) {
          slots_.back().m.assign(static_cast<size_t>(e.tensor.numel()), T(0));
          slots_.back().v.assign(static_cast<size_t>(e.tensor.numel()), T(0));
        }
      }
    }
    ++t_;
    const T bc1 = T(1) - std::pow(cfg_.beta1, static_cast<T>(t_));
    const T bc2 = T(1) - std::pow(cfg_.beta2, static_cast<T>(t_));
    auto& entries = params.entries();
    for (size_t p = 0; p < entries.size(); ++p) {
      if (!entries[p].trainable) continue;
      auto theta = entries[p].tensor.mutable_values();
      auto g = entries[p].tensor.grad_view();
      auto& slot = slots_[p];
      for (size_t i = 0; i < theta.size(); ++i) {
        const T gi = g.empty() ? T(0) : g[i];
        if (cfg_.weight_decay != T(0)) theta[i] -= lr * cfg_.weight_decay * theta[i];
        slot.m[i] = cfg_.beta1 * slot.m[i] + (T(1) - cfg_.beta1) * gi;
        slot.v[i] = cfg_.beta2 * slot.v[i] + (T(1) - cfg_.beta2) * gi * gi;
        const T mhat = slot.m[i] / bc1;
        const T vhat = slot.v[i] / bc2;
        theta[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

 private:
  struct Slot {
    std::vector<T> m, v;
  };
  AdamConfig<T> cfg_;
  std::vector<Slot> slots_;
  int64_t t_ = 0;
};

/// lr(i) = lr0 * (1 - i/total)^power; non-increasing, reaches 0 at i = total.
template <typename T>
T polynomial_lr(T lr0, int64_t iter, int64_t total_iters, T power) {
  if (iter >= total_iters) return T(0);
  if (iter < 0) iter = 0;
  return lr0 * std::pow(T(1) - static_cast<T>(iter) / static_cast<T>(total_iters), power);
}

}  // namespace invpt
