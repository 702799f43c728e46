#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "invpt/tensor.hpp"

namespace invpt {

/// One named model tensor. Trainable entries are optimizer targets; buffers
/// (BN running stats) are serialized state that never receives gradients.
template <typename T>
struct ParamEntry {
  std::string name;
  Tensor<T> tensor;
  bool trainable = true;
};

/// Flat registry of a model's named tensors. Names are unique; registration
/// order is the construction order, while serialization sorts by name.
template <typename T>
class ParamStore {
 public:
  Tensor<T>& add_parameter(const std::string& name, Tensor<T> init) {
    init.set_requires_grad(true);
    return insert(name, std::move(init), true);
  }

  Tensor<T>& add_buffer(const std::string& name, Tensor<T> init) { return insert(name, std::move(init), false); }

  Tensor<T>* find(const std::string& name) {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
  }

  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second].tensor;
  }

  Tensor<T>& at(const std::string& name) {
    Tensor<T>* t = find(name);
    if (!t) throw std::invalid_argument("unknown parameter name: " + name);
    return *t;
  }

  std::vector<ParamEntry<T>>& entries() { return entries_; }
  const std::vector<ParamEntry<T>>& entries() const { return entries_; }

  size_t size() const { return entries_.size(); }

  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  void zero_grads() {
    for (auto& e : entries_) e.tensor.zero_grad();
  }

  /// Entry indices in lexicographic name order, the canonical order for
  /// checkpoint serialization.
  std::vector<size_t> name_order() const {
    std::vector<size_t> idx(entries_.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(),
              [this](size_t a, size_t b) { return entries_[a].name < entries_[b].name; });
    return idx;
  }

 private:
  Tensor<T>& insert(const std::string& name, Tensor<T> t, bool trainable) {
    if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    index_[name] = entries_.size();
    entries_.push_back(ParamEntry<T>{name, std::move(t), trainable});
    return entries_.back().tensor;
  }

  std::vector<ParamEntry<T>> entries_;
  std::unordered_map<std::string, size_t> index_;
};

}  // namespace invpt
