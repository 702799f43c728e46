#pragma once

#include <functional>
#include <initializer_list>
#include <stdexcept>
#include <utility>
#include <vector>

#include "invpt/tensor.hpp"

namespace invpt {

/// Ordered record of executed differentiable ops. Each entry is a closure
/// that pulls the output gradient and accumulates into the input gradients;
/// replaying entries in reverse execution order is the whole of backprop.
/// Ops record themselves onto the thread-local active tape (see TapeScope);
/// with no active tape every op is a plain forward computation.
template <typename T>
class Tape {
 public:
  static Tape*& active_slot() {
    thread_local Tape* active = nullptr;
    return active;
  }

  static Tape* active() { return active_slot(); }

  void record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

  size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  void clear() {
    entries_.clear();
    consumed_ = false;
  }

  /// Seeds d(loss)/d(loss) = 1 and replays the tape backward. Gradients
  /// accumulate additively across fan-out, so callers zero parameter grads
  /// between steps.
  void backward(Tensor<T>& loss) {
    if (!loss.defined() || loss.numel() != 1) throw ShapeError("backward requires a scalar loss");
    if (entries_.empty()) throw std::logic_error("backward on an empty tape");
    if (consumed_) throw std::logic_error("backward called twice without tape reset");
    consumed_ = true;
    loss.grad()[0] += T(1);
    for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> entries_;
  bool consumed_ = false;
};

/// RAII guard that makes `tape` the active tape on this thread.
template <typename T>
class TapeScope {
 public:
  explicit TapeScope(Tape<T>& tape) : prev_(Tape<T>::active_slot()) { Tape<T>::active_slot() = &tape; }
  ~TapeScope() { Tape<T>::active_slot() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<T>* prev_;
};

namespace detail {

template <typename T>
bool any_requires_grad(std::initializer_list<const Tensor<T>*> inputs) {
  for (const Tensor<T>* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

/// Marks `out` as grad-carrying and records `fn` when a tape is active and
/// some input participates in differentiation.
template <typename T, typename Fn>
void record_op(Tensor<T>& out, std::initializer_list<const Tensor<T>*> inputs, Fn&& fn) {
  Tape<T>* tape = Tape<T>::active();
  if (!tape || !any_requires_grad(inputs)) return;
  out.set_requires_grad(true);
  tape->record(std::forward<Fn>(fn));
}

}  // namespace detail

}  // namespace invpt
