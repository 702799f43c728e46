#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <memory>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "invpt/rng.hpp"

namespace invpt {

using Shape = std::vector<int64_t>;

/// Dimension/extent violations (mismatched operands, bad configs).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// NaN/Inf escaped from a forward op, or a numeric contract was broken.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline int64_t numel_of(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

inline void require_shape(bool cond, const std::string& msg) {
  if (!cond) throw ShapeError(msg);
}

/// Dense row-major N-d tensor. A Tensor is a value-semantic handle onto a
/// shared payload: copies alias the same buffer, which is what the tape
/// relies on for gradient accumulation. Outputs of ops are never written
/// again after the op returns; leaves (parameters, buffers) are mutated in
/// place by the optimizer between steps.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor is float/double only");

  struct Payload {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;  // empty until touched
    bool requires_grad = false;
  };

 public:
  Tensor() = default;

  explicit Tensor(Shape shape) {
    validate(shape);
    p_ = std::make_shared<Payload>();
    p_->shape = std::move(shape);
    p_->values.assign(static_cast<size_t>(numel_of(p_->shape)), T(0));
  }

  Tensor(Shape shape, std::vector<T> values) {
    validate(shape);
    require_shape(static_cast<int64_t>(values.size()) == numel_of(shape),
                  "tensor data length does not match shape " + shape_str(shape));
    p_ = std::make_shared<Payload>();
    p_->shape = std::move(shape);
    p_->values = std::move(values);
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T v) {
    Tensor t(std::move(shape));
    for (T& x : t.p_->values) x = v;
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor uniform(Shape shape, Rng& rng, T lo, T hi) {
    Tensor t(std::move(shape));
    for (T& x : t.p_->values) x = static_cast<T>(rng.uniform(lo, hi));
    return t;
  }

  static Tensor normal(Shape shape, Rng& rng, T mean, T stddev) {
    Tensor t(std::move(shape));
    for (T& x : t.p_->values) x = static_cast<T>(mean + stddev * rng.normal());
    return t;
  }

  bool defined() const { return static_cast<bool>(p_); }
  const Shape& shape() const { return p_->shape; }
  int64_t rank() const { return static_cast<int64_t>(p_->shape.size()); }
  int64_t extent(int i) const { return p_->shape[static_cast<size_t>(i)]; }
  int64_t numel() const { return static_cast<int64_t>(p_->values.size()); }

  // A Tensor is a handle: const applies to the handle, not the shared
  // payload, so buffer access stays const the way shared_ptr does.
  std::span<const T> values() const { return p_->values; }
  std::span<T> mutable_values() const { return p_->values; }

  T item() const {
    require_shape(numel() == 1, "item() on non-scalar tensor " + shape_str(shape()));
    return p_->values[0];
  }

  T at(std::initializer_list<int64_t> idx) const { return p_->values[linear(idx)]; }
  T& at(std::initializer_list<int64_t> idx) { return p_->values[linear(idx)]; }

  bool requires_grad() const { return p_ && p_->requires_grad; }
  void set_requires_grad(bool b) const { p_->requires_grad = b; }

  bool has_grad() const { return p_ && !p_->grad.empty(); }

  /// Grad buffer, allocated (zero) on first use.
  std::span<T> grad() const {
    if (p_->grad.empty()) p_->grad.assign(p_->values.size(), T(0));
    return p_->grad;
  }

  /// Read-only grad view; empty span when no gradient ever reached this tensor.
  std::span<const T> grad_view() const {
    if (!p_ || p_->grad.empty()) return {};
    return p_->grad;
  }

  void zero_grad() const {
    if (p_ && !p_->grad.empty()) p_->grad.assign(p_->values.size(), T(0));
  }

  /// Deep copy of values only (fresh payload, no grad, no requires_grad).
  Tensor clone() const {
    Tensor t;
    t.p_ = std::make_shared<Payload>();
    t.p_->shape = p_->shape;
    t.p_->values = p_->values;
    return t;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> v(p_->values.size());
    for (size_t i = 0; i < v.size(); ++i) v[i] = static_cast<U>(p_->values[i]);
    return Tensor<U>(p_->shape, std::move(v));
  }

  /// True when both handles share one payload.
  bool same_storage(const Tensor& other) const { return p_ == other.p_; }

 private:
  static void validate(const Shape& shape) {
    for (int64_t e : shape) require_shape(e >= 0, "negative extent in shape");
  }

  size_t linear(std::initializer_list<int64_t> idx) const {
    require_shape(static_cast<int64_t>(idx.size()) == rank(), "index rank mismatch");
    int64_t off = 0;
    int i = 0;
    for (int64_t v : idx) {
      off = off * p_->shape[static_cast<size_t>(i)] + v;
      ++i;
    }
    return static_cast<size_t>(off);
  }

  std::shared_ptr<Payload> p_;
};

template <typename T>
void check_finite(const Tensor<T>& t, const char* op) {
  for (T v : t.values()) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + " produced a non-finite value");
  }
}

}  // namespace invpt
