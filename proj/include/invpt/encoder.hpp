#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "invpt/nn.hpp"
#include "invpt/norm.hpp"
#include "invpt/ops.hpp"
#include "invpt/sequence.hpp"

namespace invpt {

struct EncoderConfig {
  int64_t patch_size = 16;
  int64_t embed_dim = 64;
  int64_t depth = 6;
  int64_t mlp_ratio = 2;
  /// 1-based layer indices whose outputs feed the decoder stages; exactly 3.
  std::vector<int64_t> tap_layers;

  std::vector<int64_t> effective_taps() const {
    if (!tap_layers.empty()) return tap_layers;
    return {depth / 3, 2 * depth / 3, depth};
  }

  void validate(int64_t image_h, int64_t image_w) const {
    if (patch_size < 1 || (patch_size & (patch_size - 1)) != 0)
      throw std::invalid_argument("encoder: patch size must be a power of two");
    if (image_h % patch_size != 0 || image_w % patch_size != 0)
      throw std::invalid_argument("encoder: image extent not divisible by patch size");
    if (depth < 1) throw std::invalid_argument("encoder: depth must be >= 1");
    if (embed_dim < 1 || mlp_ratio < 1) throw std::invalid_argument("encoder: bad width config");
    auto taps = effective_taps();
    if (taps.size() != 3) throw std::invalid_argument("encoder: exactly 3 tap layers required");
    for (size_t i = 0; i < taps.size(); ++i) {
      if (taps[i] < 1 || taps[i] > depth) throw std::invalid_argument("encoder: tap layer out of range");
      if (i > 0 && taps[i] <= taps[i - 1]) throw std::invalid_argument("encoder: tap layers must increase");
    }
  }
};

/// Task-agnostic features: final spatial map plus the three intermediate
/// token sequences tapped for decoder-side feature aggregation.
template <typename T>
struct EncoderOutput {
  Tensor<T> final_map;          // [1, C_e, H0, W0]
  std::vector<Tensor<T>> taps;  // 3 token sequences, each [H0*W0 x C_e], shallowest first
  int64_t h0 = 0, w0 = 0;
};

/// Toy isotropic ViT: patch embedding with learned positions, then pre-norm
/// single-head transformer layers at constant resolution.
template <typename T>
class ViTEncoder {
 public:
  ViTEncoder(ParamStore<T>& store, const EncoderConfig& cfg, int64_t image_h, int64_t image_w, int stages,
             Rng& rng)
      : cfg_(cfg), h0_(image_h / cfg.patch_size), w0_(image_w / cfg.patch_size) {
    cfg.validate(image_h, image_w);
    const int64_t tokens = h0_ * w0_;
    const int64_t c = cfg.embed_dim;
    patch_ = Linear<T>::create(store, "encoder.patch", 3 * cfg.patch_size * cfg.patch_size, c, rng);
    pos_ = store.add_parameter("encoder.pos", Tensor<T>::normal({tokens, c}, rng, T(0), T(0.02)));
    layers_.reserve(static_cast<size_t>(cfg.depth));
    for (int64_t i = 0; i < cfg.depth; ++i) {
      const std::string base = "encoder.layer" + std::to_string(i + 1);
      Layer l;
      l.ln1 = LayerNormLayer<T>::create(store, base + ".ln1", c);
      l.wq = Linear<T>::create(store, base + ".attn.wq", c, c, rng);
      // softmax ignores per-row constant score shifts, so a key bias would be
      // a dead parameter
      l.wk = Linear<T>::create(store, base + ".attn.wk", c, c, rng, /*bias=*/false);
      l.wv = Linear<T>::create(store, base + ".attn.wv", c, c, rng);
      l.wo = Linear<T>::create(store, base + ".attn.wo", c, c, rng);
      l.ln2 = LayerNormLayer<T>::create(store, base + ".ln2", c);
      l.mlp1 = Linear<T>::create(store, base + ".mlp.fc1", c, c * cfg.mlp_ratio, rng);
      l.mlp2 = Linear<T>::create(store, base + ".mlp.fc2", c * cfg.mlp_ratio, c, rng);
      layers_.push_back(std::move(l));
    }
    // Tap alignment: stage s works at 2^s * H0, so taps for stages >= 1 pass
    // through a transposed conv with kernel = stride = 2^s. Bias-free keeps a
    // zero tap contributing exactly zero downstream.
    for (int s = 1; s < stages; ++s) {
      align_.push_back(ConvTranspose2dLayer<T>::create(store, "encoder.align.stage" + std::to_string(s), c, c,
                                                       int64_t(1) << s, rng, /*bias=*/false));
    }
  }

  int64_t h0() const { return h0_; }
  int64_t w0() const { return w0_; }

  /// Non-overlapping patch projection plus learned positional embedding.
  Tensor<T> patch_embed(const Tensor<T>& image) const {
    require_shape(image.rank() == 3 && image.extent(0) == 3, "patch_embed: [3,H,W] image expected");
    const int64_t p = cfg_.patch_size;
    require_shape(image.extent(1) == h0_ * p && image.extent(2) == w0_ * p,
                  "patch_embed: image extent mismatch");
    Tensor<T> grid = reshape(image, {3, h0_, p, w0_, p});
    Tensor<T> patches = reshape(permute(grid, {1, 3, 0, 2, 4}), {h0_ * w0_, 3 * p * p});
    return add(patch_.forward(patches), pos_);
  }

  EncoderOutput<T> forward(const Tensor<T>& image) const {
    Tensor<T> x = patch_embed(image);
    const auto taps = cfg_.effective_taps();
    EncoderOutput<T> out;
    out.h0 = h0_;
    out.w0 = w0_;
    for (int64_t i = 0; i < cfg_.depth; ++i) {
      x = layer_forward(layers_[static_cast<size_t>(i)], x);
      for (int64_t tap : taps) {
        if (tap == i + 1) out.taps.push_back(x);
      }
    }
    out.final_map = tokens_to_map(x, h0_, w0_);
    return out;
  }

  /// Aligns a tap token sequence to the working resolution of decoder stage
  /// `stage`: identity at stage 0, learned 2^stage transposed-conv upsampling
  /// above it.
  Tensor<T> align_tap(const Tensor<T>& tap_tokens, int stage) const {
    require_shape(stage >= 0 && stage < static_cast<int>(align_.size()) + 1, "align_tap: unknown stage");
    Tensor<T> map = tokens_to_map(tap_tokens, h0_, w0_);
    if (stage == 0) return map;
    return align_[static_cast<size_t>(stage - 1)].forward(map);
  }

 private:
  struct Layer {
    LayerNormLayer<T> ln1, ln2;
    Linear<T> wq, wk, wv, wo;
    Linear<T> mlp1, mlp2;
  };

  Tensor<T> layer_forward(const Layer& l, const Tensor<T>& x) const {
    Tensor<T> y = l.ln1.forward(x);
    Tensor<T> q = l.wq.forward(y);
    Tensor<T> k = l.wk.forward(y);
    Tensor<T> v = l.wv.forward(y);
    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(cfg_.embed_dim)));
    Tensor<T> attn = softmax_rows(scale(matmul(q, transpose2d(k)), inv_sqrt));
    Tensor<T> a = add(x, l.wo.forward(matmul(attn, v)));
    Tensor<T> m = l.mlp2.forward(relu(l.mlp1.forward(l.ln2.forward(a))));
    return add(a, m);
  }

  EncoderConfig cfg_;
  int64_t h0_, w0_;
  Linear<T> patch_;
  Tensor<T> pos_;
  std::vector<Layer> layers_;
  std::vector<ConvTranspose2dLayer<T>> align_;
};

}  // namespace invpt
