#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "invpt/autograd.hpp"
#include "invpt/tensor.hpp"

namespace invpt {

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(),
                "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor<T> out(a.shape());
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] + bv[i];
  check_finite(out, "add");
  detail::record_op(out, {&a, &b}, [a, b, out]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (a.requires_grad()) {
      auto ag = a.grad();
      for (size_t i = 0; i < g.size(); ++i) ag[i] += g[i];
    }
    if (b.requires_grad()) {
      auto bg = b.grad();
      for (size_t i = 0; i < g.size(); ++i) bg[i] += g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(), "sub: shape mismatch");
  Tensor<T> out(a.shape());
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] - bv[i];
  check_finite(out, "sub");
  detail::record_op(out, {&a, &b}, [a, b, out]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (a.requires_grad()) {
      auto ag = a.grad();
      for (size_t i = 0; i < g.size(); ++i) ag[i] += g[i];
    }
    if (b.requires_grad()) {
      auto bg = b.grad();
      for (size_t i = 0; i < g.size(); ++i) bg[i] -= g[i];
    }
  });
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> out(a.shape());
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (int64_t i = 0; i < a.numel(); ++i) ov[i] = av[i] * bv[i];
  check_finite(out, "mul");
  detail::record_op(out, {&a, &b}, [a, b, out]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto av2 = a.values();
    auto bv2 = b.values();
    if (a.requires_grad()) {
      auto ag = a.grad();
      for (size_t i = 0; i < g.size(); ++i) ag[i] += g[i] * bv2[i];
    }
    if (b.requires_grad()) {
      auto bg = b.grad();
      for (size_t i = 0; i < g.size(); ++i) bg[i] += g[i] * av2[i];
    }
  });
  return out;
}

/// out = x * c for a plain (non-learnable) constant.
template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  Tensor<T> out(x.shape());
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] * c;
  check_finite(out, "scale");
  detail::record_op(out, {&x}, [x, out, c]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto xg = x.grad();
    for (size_t i = 0; i < g.size(); ++i) xg[i] += g[i] * c;
  });
  return out;
}

/// out = x * s where s is a learnable scalar tensor (numel 1).
template <typename T>
Tensor<T> scalar_mul(const Tensor<T>& x, const Tensor<T>& s) {
  require_shape(s.numel() == 1, "scalar_mul: multiplier must be scalar");
  Tensor<T> out(x.shape());
  const T sv = s.values()[0];
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] * sv;
  check_finite(out, "scalar_mul");
  detail::record_op(out, {&x, &s}, [x, s, out]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto xv2 = x.values();
    const T sv2 = s.values()[0];
    if (x.requires_grad()) {
      auto xg = x.grad();
      for (size_t i = 0; i < g.size(); ++i) xg[i] += g[i] * sv2;
    }
    if (s.requires_grad()) {
      T acc = 0;
      for (size_t i = 0; i < g.size(); ++i) acc += g[i] * xv2[i];
      s.grad()[0] += acc;
    }
  });
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out(x.shape());
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (int64_t i = 0; i < x.numel(); ++i) ov[i] = xv[i] > T(0) ? xv[i] : T(0);
  check_finite(out, "relu");
  detail::record_op(out, {&x}, [x, out]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto xv2 = x.values();
    auto xg = x.grad();
    for (size_t i = 0; i < g.size(); ++i) {
      if (xv2[i] > T(0)) xg[i] += g[i];  // subgradient 0 at 0
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.values()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  check_finite(out, "sum");
  detail::record_op(out, {&x}, [x, out]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto xg = x.grad();
    for (size_t i = 0; i < xg.size(); ++i) xg[i] += g[0];
  });
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  require_shape(x.numel() > 0, "mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---------------------------------------------------------------------------
// Data movement
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape new_shape) {
  require_shape(numel_of(new_shape) == x.numel(),
                "reshape: element count changes " + shape_str(x.shape()) + " -> " + shape_str(new_shape));
  Tensor<T> out(std::move(new_shape), std::vector<T>(x.values().begin(), x.values().end()));
  detail::record_op(out, {&x}, [x, out]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto xg = x.grad();
    for (size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
  });
  return out;
}

namespace detail {

inline std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (size_t i = s.size(); i-- > 0;) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

/// Map from output linear index to input linear index for a permutation.
inline std::vector<int64_t> permute_index_map(const Shape& in_shape, const std::vector<int>& perm) {
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[static_cast<size_t>(perm[i])];
  auto in_strides = row_major_strides(in_shape);
  const int64_t n = numel_of(in_shape);
  auto out_strides = row_major_strides(out_shape);
  std::vector<int64_t> map(static_cast<size_t>(n));
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o;
    int64_t src = 0;
    for (size_t i = 0; i < perm.size(); ++i) {
      const int64_t ci = rem / out_strides[i];
      rem -= ci * out_strides[i];
      src += ci * in_strides[static_cast<size_t>(perm[i])];
    }
    map[static_cast<size_t>(o)] = src;
  }
  return map;
}

}  // namespace detail

template <typename T>
Tensor<T> permute(const Tensor<T>& x, std::vector<int> perm) {
  require_shape(static_cast<int64_t>(perm.size()) == x.rank(), "permute: rank mismatch");
  std::vector<bool> seen(perm.size(), false);
  for (int p : perm) {
    require_shape(p >= 0 && p < x.rank() && !seen[static_cast<size_t>(p)], "permute: invalid permutation");
    seen[static_cast<size_t>(p)] = true;
  }
  Shape out_shape(perm.size());
  for (size_t i = 0; i < perm.size(); ++i) out_shape[i] = x.extent(perm[i]);
  auto map = detail::permute_index_map(x.shape(), perm);
  Tensor<T> out(out_shape);
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (size_t o = 0; o < map.size(); ++o) ov[o] = xv[static_cast<size_t>(map[o])];
  detail::record_op(out, {&x}, [x, out, map = std::move(map)]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto xg = x.grad();
    for (size_t o = 0; o < map.size(); ++o) xg[static_cast<size_t>(map[o])] += g[o];
  });
  return out;
}

/// 2-D transpose.
template <typename T>
Tensor<T> transpose2d(const Tensor<T>& x) {
  require_shape(x.rank() == 2, "transpose2d: rank-2 tensor expected");
  return permute(x, {1, 0});
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  require_shape(!parts.empty(), "concat: no inputs");
  const Shape& s0 = parts[0].shape();
  require_shape(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis");
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    require_shape(p.rank() == parts[0].rank(), "concat: rank mismatch");
    for (int i = 0; i < p.rank(); ++i) {
      if (i != axis) require_shape(p.extent(i) == s0[static_cast<size_t>(i)], "concat: extent mismatch off-axis");
    }
    axis_total += p.extent(axis);
  }
  Shape out_shape = s0;
  out_shape[static_cast<size_t>(axis)] = axis_total;

  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[static_cast<size_t>(i)];
  int64_t inner = 1;
  for (size_t i = static_cast<size_t>(axis) + 1; i < s0.size(); ++i) inner *= s0[i];

  Tensor<T> out(out_shape);
  auto ov = out.mutable_values();
  std::vector<int64_t> offsets(parts.size());
  {
    int64_t off = 0;
    for (size_t p = 0; p < parts.size(); ++p) {
      offsets[p] = off;
      off += parts[p].extent(axis);
    }
  }
  for (size_t p = 0; p < parts.size(); ++p) {
    auto pv = parts[p].values();
    const int64_t pa = parts[p].extent(axis);
    for (int64_t o = 0; o < outer; ++o) {
      T* dst = ov.data() + (o * axis_total + offsets[p]) * inner;
      const T* src = pv.data() + o * pa * inner;
      std::copy(src, src + pa * inner, dst);
    }
  }
  bool needs = false;
  for (const auto& p : parts) needs = needs || p.requires_grad();
  if (Tape<T>::active() && needs) {
    out.set_requires_grad(true);
    Tape<T>::active()->record([parts, out, offsets, outer, inner, axis_total, axis]() mutable {
      auto g = out.grad_view();
      if (g.empty()) return;
      for (size_t p = 0; p < parts.size(); ++p) {
        if (!parts[p].requires_grad()) continue;
        auto pg = parts[p].grad();
        const int64_t pa = parts[p].extent(axis);
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = g.data() + (o * axis_total + offsets[p]) * inner;
          T* dst = pg.data() + o * pa * inner;
          for (int64_t i = 0; i < pa * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return out;
}

/// Splits into `parts` equal pieces along `axis`.
template <typename T>
std::vector<Tensor<T>> split(const Tensor<T>& x, int axis, int parts) {
  require_shape(axis >= 0 && axis < x.rank(), "split: bad axis");
  require_shape(parts >= 1, "split: parts must be positive");
  const int64_t ext = x.extent(axis);
  require_shape(ext % parts == 0, "split: extent " + std::to_string(ext) + " not divisible into " +
                                      std::to_string(parts) + " parts");
  const int64_t piece = ext / parts;
  int64_t outer = 1;
  for (int i = 0; i < axis; ++i) outer *= x.extent(i);
  int64_t inner = 1;
  for (int i = axis + 1; i < x.rank(); ++i) inner *= x.extent(i);

  Shape piece_shape = x.shape();
  piece_shape[static_cast<size_t>(axis)] = piece;
  std::vector<Tensor<T>> outs;
  outs.reserve(static_cast<size_t>(parts));
  auto xv = x.values();
  for (int p = 0; p < parts; ++p) {
    Tensor<T> t(piece_shape);
    auto tv = t.mutable_values();
    for (int64_t o = 0; o < outer; ++o) {
      const T* src = xv.data() + (o * ext + p * piece) * inner;
      std::copy(src, src + piece * inner, tv.data() + o * piece * inner);
    }
    outs.push_back(std::move(t));
  }
  if (Tape<T>::active() && x.requires_grad()) {
    for (auto& t : outs) t.set_requires_grad(true);
    Tape<T>::active()->record([x, outs, outer, inner, piece, ext]() mutable {
      auto xg = x.grad();
      for (size_t p = 0; p < outs.size(); ++p) {
        auto g = outs[p].grad_view();
        if (g.empty()) continue;
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = g.data() + o * piece * inner;
          T* dst = xg.data() + (o * ext + static_cast<int64_t>(p) * piece) * inner;
          for (int64_t i = 0; i < piece * inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return outs;
}

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_shape(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 operands expected");
  require_shape(a.extent(1) == b.extent(0), "matmul: inner extents differ, " + shape_str(a.shape()) +
                                                " * " + shape_str(b.shape()));
  const int64_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<T> out({m, n});
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      if (aip == T(0)) continue;
      const T* brow = bv.data() + p * n;
      T* orow = ov.data() + i * n;
      for (int64_t j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  check_finite(out, "matmul");
  detail::record_op(out, {&a, &b}, [a, b, out, m, k, n]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto av2 = a.values();
    auto bv2 = b.values();
    if (a.requires_grad()) {  // dA = dC * B^T
      auto ag = a.grad();
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t p = 0; p < k; ++p) {
          T acc = 0;
          const T* grow = g.data() + i * n;
          const T* brow = bv2.data() + p * n;
          for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ag[i * k + p] += acc;
        }
      }
    }
    if (b.requires_grad()) {  // dB = A^T * dC
      auto bg = b.grad();
      for (int64_t i = 0; i < m; ++i) {
        const T* grow = g.data() + i * n;
        for (int64_t p = 0; p < k; ++p) {
          const T aip = av2[i * k + p];
          if (aip == T(0)) continue;
          T* bgrow = bg.data() + p * n;
          for (int64_t j = 0; j < n; ++j) bgrow[j] += aip * grow[j];
        }
      }
    }
  });
  return out;
}

/// Adds a bias row vector to every row of a [r x c] matrix.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  require_shape(x.rank() == 2 && b.rank() == 1 && b.extent(0) == x.extent(1),
                "add_bias: bias extent must equal column count");
  const int64_t r = x.extent(0), c = x.extent(1);
  Tensor<T> out(x.shape());
  auto ov = out.mutable_values();
  auto xv = x.values();
  auto bv = b.values();
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < c; ++j) ov[i * c + j] = xv[i * c + j] + bv[j];
  }
  check_finite(out, "add_bias");
  detail::record_op(out, {&x, &b}, [x, b, out, r, c]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    if (x.requires_grad()) {
      auto xg = x.grad();
      for (size_t i = 0; i < g.size(); ++i) xg[i] += g[i];
    }
    if (b.requires_grad()) {
      auto bg = b.grad();
      for (int64_t i = 0; i < r; ++i) {
        for (int64_t j = 0; j < c; ++j) bg[j] += g[i * c + j];
      }
    }
  });
  return out;
}

/// Row-wise softmax with per-row max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  require_shape(x.rank() == 2, "softmax_rows: rank-2 tensor expected");
  require_shape(x.extent(1) >= 1, "softmax_rows: empty row dimension");
  const int64_t r = x.extent(0), c = x.extent(1);
  Tensor<T> out(x.shape());
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (int64_t i = 0; i < r; ++i) {
    const T* row = xv.data() + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T denom = 0;
    T* orow = ov.data() + i * c;
    for (int64_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    for (int64_t j = 0; j < c; ++j) orow[j] /= denom;
  }
  check_finite(out, "softmax_rows");
  detail::record_op(out, {&x}, [x, out, r, c]() mutable {
    auto g = out.grad_view();
    if (g.empty()) return;
    auto yv = out.values();
    auto xg = x.grad();
    for (int64_t i = 0; i < r; ++i) {
      const T* grow = g.data() + i * c;
      const T* yrow = yv.data() + i * c;
      T dot = 0;
      for (int64_t j = 0; j < c; ++j) dot += grow[j] * yrow[j];
      T* xgrow = xg.data() + i * c;
      for (int64_t j = 0; j < c; ++j) xgrow[j] += yrow[j] * (grow[j] - dot);
    }
  });
  return out;
}

}  // namespace invpt
