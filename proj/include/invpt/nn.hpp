#pragma once

#include <cmath>
#include <string>

#include "invpt/conv.hpp"
#include "invpt/norm.hpp"
#include "invpt/ops.hpp"
#include "invpt/params.hpp"
#include "invpt/rng.hpp"

namespace invpt {

namespace init {

/// Fan-in scaled uniform, the usual default for linear/conv weights.
template <typename T>
Tensor<T> fan_in_uniform(Shape shape, int64_t fan_in, Rng& rng) {
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  return Tensor<T>::uniform(std::move(shape), rng, -bound, bound);
}

}  // namespace init

/// y = x W (+ b), x: [r x in], W: [in x out].
template <typename T>
struct Linear {
  Tensor<T> w, b;

  static Linear create(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out, Rng& rng,
                       bool bias = true) {
    Linear l;
    l.w = store.add_parameter(name + ".weight", init::fan_in_uniform<T>({in, out}, in, rng));
    if (bias) l.b = store.add_parameter(name + ".bias", init::fan_in_uniform<T>({out}, in, rng));
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x) const {
    Tensor<T> y = matmul(x, w);
    return b.defined() ? add_bias(y, b) : y;
  }
};

template <typename T>
struct Conv2dLayer {
  Tensor<T> w, b;
  int64_t stride = 1, pad = 0;

  static Conv2dLayer create(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out, int64_t k,
                            int64_t stride, int64_t pad, Rng& rng, bool bias = true) {
    Conv2dLayer l;
    l.stride = stride;
    l.pad = pad;
    const int64_t fan_in = in * k * k;
    l.w = store.add_parameter(name + ".weight", init::fan_in_uniform<T>({out, in, k, k}, fan_in, rng));
    if (bias) l.b = store.add_parameter(name + ".bias", init::fan_in_uniform<T>({out}, fan_in, rng));
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return conv2d(x, w, b, stride, pad); }
};

template <typename T>
struct ConvTranspose2dLayer {
  Tensor<T> w, b;
  int64_t stride = 2;

  static ConvTranspose2dLayer create(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out,
                                     int64_t stride, Rng& rng, bool bias = true) {
    ConvTranspose2dLayer l;
    l.stride = stride;
    const int64_t fan_in = in * stride * stride;
    l.w = store.add_parameter(name + ".weight", init::fan_in_uniform<T>({in, out, stride, stride}, fan_in, rng));
    if (bias) l.b = store.add_parameter(name + ".bias", init::fan_in_uniform<T>({out}, fan_in, rng));
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return transposed_conv2d(x, w, b, stride); }
};

template <typename T>
struct BatchNorm2dLayer {
  Tensor<T> gamma, beta, running_mean, running_var;
  T momentum = T(0.1);

  static BatchNorm2dLayer create(ParamStore<T>& store, const std::string& name, int64_t channels) {
    BatchNorm2dLayer l;
    l.gamma = store.add_parameter(name + ".gamma", Tensor<T>::full({channels}, T(1)));
    l.beta = store.add_parameter(name + ".beta", Tensor<T>::zeros({channels}));
    l.running_mean = store.add_buffer(name + ".running_mean", Tensor<T>::zeros({channels}));
    l.running_var = store.add_buffer(name + ".running_var", Tensor<T>::full({channels}, T(1)));
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) {
    return batch_norm2d(x, gamma, beta, running_mean, running_var, momentum, training);
  }
};

template <typename T>
struct LayerNormLayer {
  Tensor<T> gamma, beta;

  static LayerNormLayer create(ParamStore<T>& store, const std::string& name, int64_t channels) {
    LayerNormLayer l;
    l.gamma = store.add_parameter(name + ".gamma", Tensor<T>::full({channels}, T(1)));
    l.beta = store.add_parameter(name + ".beta", Tensor<T>::zeros({channels}));
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta); }
};

/// 3x3 conv (pad keeps extent) -> BN -> ReLU, the decoding block used
/// throughout the preliminary and pyramid decoders. The conv is bias-free:
/// train-mode BN subtracts the channel mean, so a conv bias would be a
/// dead parameter with an exactly-zero gradient.
template <typename T>
struct ConvBnRelu {
  Conv2dLayer<T> conv;
  BatchNorm2dLayer<T> bn;

  static ConvBnRelu create(ParamStore<T>& store, const std::string& name, int64_t in, int64_t out, Rng& rng,
                           int64_t k = 3) {
    ConvBnRelu l;
    l.conv = Conv2dLayer<T>::create(store, name + ".conv", in, out, k, 1, (k - 1) / 2, rng, /*bias=*/false);
    l.bn = BatchNorm2dLayer<T>::create(store, name + ".bn", out);
    return l;
  }

  Tensor<T> forward(const Tensor<T>& x, bool training) { return relu(bn.forward(conv.forward(x), training)); }
};

}  // namespace invpt
