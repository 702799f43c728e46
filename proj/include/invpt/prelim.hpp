#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "invpt/nn.hpp"
#include "invpt/sequence.hpp"
#include "invpt/tasks.hpp"

namespace invpt {

template <typename T>
struct PrelimOutput {
  std::vector<Tensor<T>> task_features;  // F^d_t, each [1, C_d, H0, W0]
  std::vector<Tensor<T>> predictions;    // P_t, each [1, out_t, H0, W0]
  MultiTaskSeq<T> combined;              // F^c, [T*H0*W0 x C0]
};

/// Task-specific preliminary decoders: two Conv-BN-ReLU blocks per task, a
/// 1x1 prediction head, and the channel-concat + 1x1 projection that turns
/// each task's (feature, prediction) pair into a C0-wide map. Flattening the
/// per-task maps and concatenating them in task order yields the multi-task
/// input sequence of the pyramid decoder.
template <typename T>
class PrelimDecoder {
 public:
  PrelimDecoder(ParamStore<T>& store, const std::vector<TaskSpec>& tasks, int64_t encoder_dim, int64_t cd,
                int64_t c0, Rng& rng)
      : tasks_(tasks) {
    for (const auto& task : tasks_) {
      task.validate();
      const std::string base = "prelim." + task.name;
      Branch br;
      br.block1 = ConvBnRelu<T>::create(store, base + ".block1", encoder_dim, cd, rng);
      br.block2 = ConvBnRelu<T>::create(store, base + ".block2", cd, cd, rng);
      br.head = Conv2dLayer<T>::create(store, base + ".head", cd, task.out_channels(), 1, 1, 0, rng);
      br.proj = Conv2dLayer<T>::create(store, base + ".proj", cd + task.out_channels(), c0, 1, 1, 0, rng);
      branches_.push_back(std::move(br));
    }
  }

  std::pair<Tensor<T>, Tensor<T>> decode_task(const Tensor<T>& enc_map, size_t task_idx, bool training) {
    require_shape(task_idx < branches_.size(), "prelim: unknown task index");
    auto& br = branches_[task_idx];
    Tensor<T> fd = br.block2.forward(br.block1.forward(enc_map, training), training);
    Tensor<T> pred = br.head.forward(fd);
    return {fd, pred};
  }

  PrelimOutput<T> forward(const Tensor<T>& enc_map, bool training) {
    require_shape(enc_map.rank() == 4 && enc_map.extent(0) == 1, "prelim: [1,C,H,W] encoder map expected");
    const int64_t h0 = enc_map.extent(2), w0 = enc_map.extent(3);
    PrelimOutput<T> out;
    std::vector<Tensor<T>> combined_maps;
    for (size_t t = 0; t < branches_.size(); ++t) {
      auto [fd, pred] = decode_task(enc_map, t, training);
      Tensor<T> cat = concat<T>({fd, pred}, 1);
      combined_maps.push_back(branches_[t].proj.forward(cat));
      out.task_features.push_back(std::move(fd));
      out.predictions.push_back(std::move(pred));
    }
    Tensor<T> stacked = concat(combined_maps, 0);  // [T, C0, H0, W0]
    out.combined = task_maps_to_seq(stacked);
    require_shape(out.combined.rows() == static_cast<int64_t>(branches_.size()) * h0 * w0,
                  "prelim: combined sequence row count mismatch");
    return out;
  }

  const std::vector<TaskSpec>& tasks() const { return tasks_; }

 private:
  struct Branch {
    ConvBnRelu<T> block1, block2;
    Conv2dLayer<T> head, proj;
  };

  std::vector<TaskSpec> tasks_;
  std::vector<Branch> branches_;
};

}  // namespace invpt
