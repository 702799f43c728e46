#pragma once

#include <cstdint>

#include "invpt/ops.hpp"
#include "invpt/tensor.hpp"

namespace invpt {

/// Flattened multi-task token sequence: T per-task feature maps laid out
/// task-major, each row-major spatial, one row per token. data is
/// [tasks*height*width x channels].
template <typename T>
struct MultiTaskSeq {
  Tensor<T> data;
  int64_t tasks = 0;
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;

  MultiTaskSeq() = default;
  MultiTaskSeq(Tensor<T> d, int64_t t, int64_t h, int64_t w, int64_t c)
      : data(std::move(d)), tasks(t), height(h), width(w), channels(c) {
    require_shape(data.rank() == 2 && data.extent(0) == t * h * w && data.extent(1) == c,
                  "MultiTaskSeq: data shape does not match metadata");
  }

  int64_t rows() const { return tasks * height * width; }
};

/// [T*H*W x C] sequence -> [T, C, H, W] stack of per-task spatial maps.
template <typename T>
Tensor<T> seq_to_task_maps(const MultiTaskSeq<T>& seq) {
  Tensor<T> spatial = reshape(seq.data, {seq.tasks, seq.height, seq.width, seq.channels});
  return permute(spatial, {0, 3, 1, 2});
}

/// Inverse of seq_to_task_maps.
template <typename T>
MultiTaskSeq<T> task_maps_to_seq(const Tensor<T>& maps) {
  require_shape(maps.rank() == 4, "task_maps_to_seq: [T,C,H,W] tensor expected");
  const int64_t t = maps.extent(0), c = maps.extent(1), h = maps.extent(2), w = maps.extent(3);
  Tensor<T> back = permute(maps, {0, 2, 3, 1});
  return MultiTaskSeq<T>(reshape(back, {t * h * w, c}), t, h, w, c);
}

/// Single spatial map [1, C, H, W] -> token rows [H*W x C].
template <typename T>
Tensor<T> map_to_tokens(const Tensor<T>& map) {
  require_shape(map.rank() == 4 && map.extent(0) == 1, "map_to_tokens: [1,C,H,W] tensor expected");
  const int64_t c = map.extent(1), h = map.extent(2), w = map.extent(3);
  return reshape(permute(map, {0, 2, 3, 1}), {h * w, c});
}

/// Token rows [H*W x C] -> spatial map [1, C, H, W].
template <typename T>
Tensor<T> tokens_to_map(const Tensor<T>& tokens, int64_t h, int64_t w) {
  require_shape(tokens.rank() == 2 && tokens.extent(0) == h * w, "tokens_to_map: row count mismatch");
  const int64_t c = tokens.extent(1);
  return permute(reshape(tokens, {1, h, w, c}), {0, 3, 1, 2});
}

}  // namespace invpt
