#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "invpt/nn.hpp"
#include "invpt/norm.hpp"
#include "invpt/sequence.hpp"
#include "invpt/tasks.hpp"

namespace invpt {

/// Derived geometry of one decoder stage. Stage 0 keeps the input resolution;
/// every later stage doubles it and halves the channel width. The pooling
/// kernel 2^(s+1) pins the key/value token count to T*H0*W0/4 at every stage,
/// which is what keeps attention matrices the same width across the pyramid
/// and makes cross-stage message passing line up.
struct StagePlan {
  int stage = 0;
  int64_t in_h = 0, in_w = 0, in_c = 0;        // F_s geometry per task
  int64_t work_h = 0, work_w = 0, work_c = 0;  // F'_s geometry per task
  int64_t k_c = 3;                             // query conv kernel
  int64_t k_s = 2;                             // key/value pooling kernel
  int64_t q_rows = 0;                          // rows of Q and A
  int64_t kv_rows = 0;                         // rows of K and V, columns of A
};

inline std::vector<StagePlan> make_stage_plans(int64_t tasks, int64_t h0, int64_t w0, int64_t c0, int stages) {
  if (tasks < 1) throw std::invalid_argument("stage plan: need at least one task");
  if (stages < 1 || stages > 3) throw std::invalid_argument("stage plan: stage count must be 1..3");
  if (h0 < 2 || w0 < 2 || h0 % 2 != 0 || w0 % 2 != 0)
    throw std::invalid_argument("stage plan: base resolution must be even and >= 2");
  const int64_t halvings = int64_t(1) << (stages - 1);
  if (stages > 1 && c0 % halvings != 0)
    throw std::invalid_argument("stage plan: channel width " + std::to_string(c0) +
                                " does not survive per-stage halving");
  if (c0 < 1) throw std::invalid_argument("stage plan: bad channel width");

  std::vector<StagePlan> plans;
  for (int s = 0; s < stages; ++s) {
    StagePlan p;
    p.stage = s;
    p.k_s = int64_t(1) << (s + 1);
    if (s == 0) {
      p.in_h = h0;
      p.in_w = w0;
      p.in_c = c0;
      p.work_h = h0;
      p.work_w = w0;
      p.work_c = c0;
    } else {
      p.in_h = (int64_t(1) << (s - 1)) * h0;
      p.in_w = (int64_t(1) << (s - 1)) * w0;
      p.in_c = c0 >> (s - 1);
      p.work_h = 2 * p.in_h;
      p.work_w = 2 * p.in_w;
      p.work_c = p.in_c / 2;
    }
    if (p.work_h % p.k_s != 0 || p.work_w % p.k_s != 0)
      throw std::invalid_argument("stage plan: working extent not divisible by pooling kernel");
    p.q_rows = tasks * (p.work_h / 2) * (p.work_w / 2);
    p.kv_rows = tasks * (p.work_h / p.k_s) * (p.work_w / p.k_s);
    plans.push_back(p);
  }
  return plans;
}

/// Intermediates of one stage, kept only when a caller asks for them
/// (verification suites, shape/residual tests).
template <typename T>
struct StageTrace {
  Tensor<T> f_up;      // upsampled input sequence (stages >= 1)
  Tensor<T> f_prime;   // post-LN working sequence, the residual source
  Tensor<T> q, k, v;
  Tensor<T> a_raw;     // Q K^T / sqrt(C')
  Tensor<T> m;         // upsampled previous-stage scores (when message passing ran)
  Tensor<T> a_pre;     // pre-softmax scores after message passing, handed to s+1
  Tensor<T> a_soft;    // row-stochastic attention
  Tensor<T> context;   // a_soft * V
  Tensor<T> f_next;    // stage output sequence
};

/// Task-wise reshape -> bilinear 2x -> Conv-BN-ReLU -> re-flatten. The block's
/// output width decides whether channels are halved or preserved.
template <typename T>
MultiTaskSeq<T> reshape_and_up(const MultiTaskSeq<T>& f, ConvBnRelu<T>& block, bool training) {
  Tensor<T> maps = seq_to_task_maps(f);
  Tensor<T> up = bilinear_upsample2x(maps);
  Tensor<T> fused = block.forward(up, training);
  return task_maps_to_seq(fused);
}

/// Builds the cross-stage attention message: previous-stage scores are
/// sliced task-wise, read as (H_s/2 x W_s/2) spatial grids whose channels are
/// the key/value columns, bilinearly doubled, and re-flattened to the current
/// stage's row count.
template <typename T>
Tensor<T> amp_message(const Tensor<T>& a_prev, int64_t tasks, int64_t h_half, int64_t w_half) {
  require_shape(a_prev.rank() == 2, "amp: score matrix expected");
  require_shape(a_prev.extent(0) == tasks * h_half * w_half,
                "amp: previous-stage row count does not match stage geometry");
  const int64_t cols = a_prev.extent(1);
  MultiTaskSeq<T> seq(a_prev, tasks, h_half, w_half, cols);
  Tensor<T> up = bilinear_upsample2x(seq_to_task_maps(seq));
  return task_maps_to_seq(up).data;
}

/// The three-stage pyramid decoder: a resolution-preserving stage 0 followed
/// by UP-Transformer stages, cross-stage attention message passing, encoder
/// feature aggregation, multi-stage fusion and per-task prediction heads.
template <typename T>
class InvPTDecoder {
 public:
  InvPTDecoder(ParamStore<T>& store, const std::vector<TaskSpec>& tasks, int64_t h0, int64_t w0, int64_t c0,
               int64_t encoder_dim, int stages, bool amp, std::array<bool, 3> efa, Rng& rng)
      : tasks_(tasks),
        plans_(make_stage_plans(static_cast<int64_t>(tasks.size()), h0, w0, c0, stages)),
        amp_(amp),
        efa_(efa) {
    for (const auto& plan : plans_) {
      const std::string base = "decoder.stage" + std::to_string(plan.stage);
      Stage st;
      if (plan.stage >= 1) {
        st.up_block = ConvBnRelu<T>::create(store, base + ".up", plan.in_c, plan.work_c, rng);
        if (amp_) {
          st.alpha1 = store.add_parameter(base + ".amp.alpha1", Tensor<T>::scalar(T(1)));
          st.alpha2 = store.add_parameter(base + ".amp.alpha2", Tensor<T>::scalar(T(1)));
        }
      }
      if (efa_[static_cast<size_t>(plan.stage)]) {
        st.efa_conv = Conv2dLayer<T>::create(store, base + ".efa.conv", encoder_dim, plan.work_c, 3, 1, 1, rng,
                                             /*bias=*/false);
      }
      st.ln = LayerNormLayer<T>::create(store, base + ".ln", plan.work_c);
      st.q_conv = Conv2dLayer<T>::create(store, base + ".qconv", plan.work_c, plan.work_c, plan.k_c, 2, 1, rng);
      st.wq = Linear<T>::create(store, base + ".wq", plan.work_c, plan.work_c, rng, /*bias=*/false);
      st.wk = Linear<T>::create(store, base + ".wk", plan.work_c, plan.work_c, rng, /*bias=*/false);
      st.wv = Linear<T>::create(store, base + ".wv", plan.work_c, plan.work_c, rng, /*bias=*/false);
      st.out_block = ConvBnRelu<T>::create(store, base + ".out", plan.work_c, plan.work_c, rng);
      stages_.push_back(std::move(st));
    }
    const StagePlan& last = plans_.back();
    for (const auto& plan : plans_) {
      if (plan.stage == last.stage) continue;
      fuse_proj_.push_back(Conv2dLayer<T>::create(store, "decoder.fuse.proj" + std::to_string(plan.stage),
                                                  plan.work_c, last.work_c, 1, 1, 0, rng));
    }
    fuse_block_ = ConvBnRelu<T>::create(store, "decoder.fuse.out", last.work_c, last.work_c, rng);
    for (const auto& task : tasks_) {
      heads_.push_back(Conv2dLayer<T>::create(store, "decoder.head." + task.name, last.work_c,
                                              task.out_channels(), 1, 1, 0, rng));
    }
  }

  const std::vector<StagePlan>& plans() const { return plans_; }
  int stage_count() const { return static_cast<int>(plans_.size()); }
  bool amp_enabled() const { return amp_; }

  /// Runs one stage. `tap` is the resolution-aligned encoder feature (may be
  /// undefined when aggregation is off for this stage); `a_prev` is the
  /// previous stage's pre-softmax score matrix (undefined at stage 0).
  std::pair<MultiTaskSeq<T>, Tensor<T>> run_stage(int s, const MultiTaskSeq<T>& f_in, const Tensor<T>& tap,
                                                  const Tensor<T>& a_prev, bool training,
                                                  StageTrace<T>* tr = nullptr) {
    require_shape(s >= 0 && s < stage_count(), "decoder: stage index out of range");
    const StagePlan& plan = plans_[static_cast<size_t>(s)];
    Stage& st = stages_[static_cast<size_t>(s)];
    const int64_t tasks = static_cast<int64_t>(tasks_.size());
    require_shape(f_in.tasks == tasks && f_in.height == plan.in_h && f_in.width == plan.in_w &&
                      f_in.channels == plan.in_c,
                  "decoder: stage input geometry mismatch");

    Tensor<T> x;
    MultiTaskSeq<T> f_up;
    if (s == 0) {
      x = f_in.data;
    } else {
      f_up = reshape_and_up(f_in, st.up_block, training);
      x = f_up.data;
    }
    if (tap.defined() && efa_[static_cast<size_t>(s)]) {
      x = add(x, efa_term(s, tap));
    }
    Tensor<T> f_prime = st.ln.forward(x);
    MultiTaskSeq<T> fp_seq(f_prime, tasks, plan.work_h, plan.work_w, plan.work_c);

    Tensor<T> maps = seq_to_task_maps(fp_seq);
    Tensor<T> q = st.wq.forward(task_maps_to_seq(st.q_conv.forward(maps)).data);
    Tensor<T> pooled_tokens = task_maps_to_seq(avg_pool2d(maps, plan.k_s)).data;
    Tensor<T> k = st.wk.forward(pooled_tokens);
    Tensor<T> v = st.wv.forward(pooled_tokens);
    require_shape(q.extent(1) == k.extent(1), "decoder: Q/K channel mismatch");

    const T inv_sqrt = T(1) / static_cast<T>(std::sqrt(static_cast<double>(plan.work_c)));
    Tensor<T> a_raw = scale(matmul(q, transpose2d(k)), inv_sqrt);

    Tensor<T> a_pre = a_raw;
    Tensor<T> message;
    if (s >= 1 && amp_ && a_prev.defined()) {
      require_shape(a_prev.extent(1) == a_raw.extent(1),
                    "decoder: message-passing column mismatch (stage geometry bug)");
      message = amp_message(a_prev, tasks, plan.work_h / 4, plan.work_w / 4);
      a_pre = add(scalar_mul(a_raw, st.alpha1), scalar_mul(message, st.alpha2));
    }
    Tensor<T> a_soft = softmax_rows(a_pre);
    Tensor<T> context = matmul(a_soft, v);

    MultiTaskSeq<T> ctx_seq(context, tasks, plan.work_h / 2, plan.work_w / 2, plan.work_c);
    MultiTaskSeq<T> restored = reshape_and_up(ctx_seq, st.out_block, training);
    Tensor<T> f_next = add(restored.data, f_prime);

    if (tr) {
      tr->f_up = f_up.data;
      tr->f_prime = f_prime;
      tr->q = q;
      tr->k = k;
      tr->v = v;
      tr->a_raw = a_raw;
      tr->m = message;
      tr->a_pre = a_pre;
      tr->a_soft = a_soft;
      tr->context = context;
      tr->f_next = f_next;
    }
    return {MultiTaskSeq<T>(f_next, tasks, plan.work_h, plan.work_w, plan.work_c), a_pre};
  }

  /// Full pyramid: consecutive stages, then the multi-stage fusion that
  /// aligns every stage output to the last stage's resolution and width.
  /// Returns per-task fused feature maps stacked as [T, C_last, R, R].
  Tensor<T> forward_features(const MultiTaskSeq<T>& f_c, const std::vector<Tensor<T>>& aligned_taps,
                             bool training, std::vector<StageTrace<T>>* trace = nullptr) {
    require_shape(aligned_taps.size() == plans_.size(), "decoder: one aligned tap per stage expected");
    std::vector<MultiTaskSeq<T>> outputs;
    MultiTaskSeq<T> cur = f_c;
    Tensor<T> a_prev;
    for (int s = 0; s < stage_count(); ++s) {
      StageTrace<T> tr;
      auto [next, a] = run_stage(s, cur, aligned_taps[static_cast<size_t>(s)], a_prev, training,
                                 trace ? &tr : nullptr);
      if (trace) trace->push_back(std::move(tr));
      outputs.push_back(next);
      cur = next;
      a_prev = a;
    }
    return fuse_stages(outputs, training);
  }

  /// Aligns stage outputs to the last stage's resolution (bilinear) and
  /// channel width (1x1 projection), sums them and applies one Conv-BN-ReLU.
  Tensor<T> fuse_stages(const std::vector<MultiTaskSeq<T>>& outputs, bool training) {
    require_shape(outputs.size() == plans_.size(), "fuse: missing stage output");
    const StagePlan& last = plans_.back();
    Tensor<T> acc = seq_to_task_maps(outputs.back());
    for (size_t s = 0; s + 1 < outputs.size(); ++s) {
      Tensor<T> maps = seq_to_task_maps(outputs[s]);
      const int64_t factor = last.work_h / plans_[s].work_h;
      Tensor<T> up = bilinear_upsample_pow2(maps, factor);
      acc = add(acc, fuse_proj_[s].forward(up));
    }
    return fuse_block_.forward(acc, training);
  }

  /// Per-task 1x1 heads followed by bilinear upsampling to label resolution.
  std::vector<Tensor<T>> predict(const Tensor<T>& fused, int64_t label_h, int64_t label_w) {
    require_shape(fused.rank() == 4 && fused.extent(0) == static_cast<int64_t>(tasks_.size()),
                  "predict: [T,C,R,R] fused features expected");
    const int64_t r_h = fused.extent(2), r_w = fused.extent(3);
    require_shape(label_h % r_h == 0 && label_w % r_w == 0 && label_h / r_h == label_w / r_w,
                  "predict: label resolution must be a multiple of the fused resolution");
    std::vector<Tensor<T>> maps = split(fused, 0, static_cast<int>(tasks_.size()));
    std::vector<Tensor<T>> preds;
    for (size_t t = 0; t < tasks_.size(); ++t) {
      Tensor<T> logits = heads_[t].forward(maps[t]);
      preds.push_back(bilinear_upsample_pow2(logits, label_h / r_h));
    }
    return preds;
  }

  /// Additive encoder feature term: 3x3 conv to the stage width, flatten,
  /// replicate once per task.
  Tensor<T> efa_term(int s, const Tensor<T>& aligned_tap) {
    const StagePlan& plan = plans_[static_cast<size_t>(s)];
    require_shape(aligned_tap.rank() == 4 && aligned_tap.extent(2) == plan.work_h &&
                      aligned_tap.extent(3) == plan.work_w,
                  "efa: tap extent does not match stage working resolution");
    Tensor<T> mapped = stages_[static_cast<size_t>(s)].efa_conv.forward(aligned_tap);
    Tensor<T> tokens = map_to_tokens(mapped);
    std::vector<Tensor<T>> reps(tasks_.size(), tokens);
    return concat(reps, 0);
  }

 private:
  struct Stage {
    ConvBnRelu<T> up_block;
    Tensor<T> alpha1, alpha2;
    Conv2dLayer<T> efa_conv;
    LayerNormLayer<T> ln;
    Conv2dLayer<T> q_conv;
    Linear<T> wq, wk, wv;
    ConvBnRelu<T> out_block;
  };

  std::vector<TaskSpec> tasks_;
  std::vector<StagePlan> plans_;
  bool amp_ = true;
  std::array<bool, 3> efa_{true, true, true};
  std::vector<Stage> stages_;
  std::vector<Conv2dLayer<T>> fuse_proj_;
  ConvBnRelu<T> fuse_block_;
  std::vector<Conv2dLayer<T>> heads_;
};

}  // namespace invpt
