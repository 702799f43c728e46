#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "invpt/adam.hpp"
#include "invpt/decoder.hpp"
#include "invpt/encoder.hpp"
#include "invpt/loss.hpp"
#include "invpt/prelim.hpp"
#include "invpt/synthdata.hpp"
#include "invpt/tasks.hpp"

namespace invpt {

struct ModelConfig {
  int64_t image_size = 128;
  EncoderConfig encoder;
  std::vector<TaskSpec> tasks;
  int64_t c0 = 64;  // multi-task sequence width entering the decoder
  int64_t cd = 64;  // preliminary decoder feature width
  int stages = 3;
  bool amp = true;
  std::array<bool, 3> efa{true, true, true};
  double lr = 1e-3;
  double weight_decay = 1e-6;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double poly_power = 0.9;
  double prelim_loss_weight = 1.0;  // scale on the intermediate supervision term
  int64_t batch_size = 2;
  uint64_t seed = 0;

  int64_t h0() const { return image_size / encoder.patch_size; }

  void validate() const {
    encoder.validate(image_size, image_size);
    if (tasks.empty()) throw std::invalid_argument("config: no tasks");
    for (const auto& t : tasks) t.validate();
    for (size_t i = 0; i < tasks.size(); ++i) {
      for (size_t j = i + 1; j < tasks.size(); ++j) {
        if (tasks[i].name == tasks[j].name) throw std::invalid_argument("config: duplicate task name");
      }
    }
    if (batch_size < 1) throw std::invalid_argument("config: batch size must be >= 1");
    if (lr <= 0) throw std::invalid_argument("config: learning rate must be positive");
    if (prelim_loss_weight < 0) throw std::invalid_argument("config: negative intermediate loss weight");
    make_stage_plans(static_cast<int64_t>(tasks.size()), h0(), h0(), c0, stages);  // geometry check
  }
};

template <typename T>
struct ModelOutput {
  std::vector<Tensor<T>> prelim;  // per task, [1, out_t, H0, W0]
  std::vector<Tensor<T>> final;   // per task, [1, out_t, H, W]
};

/// End-to-end pipeline: shared encoder, per-task preliminary decoders, the
/// pyramid decoder with message passing and encoder feature aggregation, and
/// per-task prediction heads. One instance owns one parameter store.
template <typename T>
class InvPTModel {
 public:
  explicit InvPTModel(const ModelConfig& cfg)
      : cfg_(cfg), rng_(cfg.seed) {
    cfg_.validate();
    encoder_ = std::make_unique<ViTEncoder<T>>(store_, cfg_.encoder, cfg_.image_size, cfg_.image_size,
                                               cfg_.stages, rng_);
    prelim_ = std::make_unique<PrelimDecoder<T>>(store_, cfg_.tasks, cfg_.encoder.embed_dim, cfg_.cd, cfg_.c0,
                                                 rng_);
    decoder_ = std::make_unique<InvPTDecoder<T>>(store_, cfg_.tasks, encoder_->h0(), encoder_->w0(), cfg_.c0,
                                                 cfg_.encoder.embed_dim, cfg_.stages, cfg_.amp, cfg_.efa, rng_);
  }

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  ViTEncoder<T>& encoder() { return *encoder_; }
  PrelimDecoder<T>& prelim() { return *prelim_; }
  InvPTDecoder<T>& decoder() { return *decoder_; }

  /// Taps are handed to stages deepest-first: the deepest tap feeds stage 0,
  /// the shallowest feeds the highest-resolution stage.
  ModelOutput<T> forward(const Tensor<T>& image, bool training,
                         std::vector<StageTrace<T>>* trace = nullptr) {
    EncoderOutput<T> enc = encoder_->forward(image);
    PrelimOutput<T> pre = prelim_->forward(enc.final_map, training);
    std::vector<Tensor<T>> aligned(static_cast<size_t>(cfg_.stages));
    for (int s = 0; s < cfg_.stages; ++s) {
      if (!cfg_.efa[static_cast<size_t>(s)]) continue;
      const size_t tap_idx = enc.taps.size() - 1 - static_cast<size_t>(s);
      aligned[static_cast<size_t>(s)] = encoder_->align_tap(enc.taps[tap_idx], s);
    }
    Tensor<T> fused = decoder_->forward_features(pre.combined, aligned, training, trace);
    ModelOutput<T> out;
    out.prelim = std::move(pre.predictions);
    out.final = decoder_->predict(fused, image.extent(1), image.extent(2));
    return out;
  }

  Tensor<T> image_tensor(const synth::Sample& s) const {
    std::vector<T> v(s.image.begin(), s.image.end());
    return Tensor<T>({3, s.height, s.width}, std::move(v));
  }

 private:
  ModelConfig cfg_;
  Rng rng_;
  ParamStore<T> store_;
  std::unique_ptr<ViTEncoder<T>> encoder_;
  std::unique_ptr<PrelimDecoder<T>> prelim_;
  std::unique_ptr<InvPTDecoder<T>> decoder_;
};

// ---------------------------------------------------------------------------
// Supervision
// ---------------------------------------------------------------------------

inline const std::vector<int32_t>& discrete_labels(const synth::Sample& s, const TaskSpec& task) {
  if (task.name == "semseg") return s.semseg;
  if (task.name == "boundary") return s.boundary;
  if (task.name == "saliency") return s.saliency;
  throw std::invalid_argument("no discrete labels for task: " + task.name);
}

template <typename T>
Tensor<T> continuous_target(const synth::Sample& s, const TaskSpec& task) {
  if (task.name == "depth") {
    std::vector<T> v(s.depth.begin(), s.depth.end());
    return Tensor<T>({1, 1, s.height, s.width}, std::move(v));
  }
  throw std::invalid_argument("no continuous labels for task: " + task.name);
}

template <typename T>
struct LossBreakdown {
  Tensor<T> total;               // scalar
  std::vector<double> per_task;  // weighted prelim+final value per task
};

/// L = sum_t w_t * (s * l(P_t upsampled, y_t) + l(P^_t, y_t)); the same loss
/// kind supervises the intermediate and final predictions of a task.
template <typename T>
LossBreakdown<T> multitask_loss(const ModelOutput<T>& out, const synth::Sample& sample,
                                const std::vector<TaskSpec>& tasks, double prelim_weight = 1.0) {
  require_shape(out.prelim.size() == tasks.size() && out.final.size() == tasks.size(),
                "loss: prediction/task count mismatch");
  LossBreakdown<T> result;
  for (size_t t = 0; t < tasks.size(); ++t) {
    const TaskSpec& task = tasks[t];
    const int64_t label_h = sample.height;
    const Tensor<T>& fin = out.final[t];
    require_shape(fin.extent(2) == label_h, "loss: final prediction not at label resolution");
    Tensor<T> prelim_up = bilinear_upsample_pow2(out.prelim[t], label_h / out.prelim[t].extent(2));
    Tensor<T> task_loss;
    if (task.discrete) {
      const auto& labels = discrete_labels(sample, task);
      require_shape(fin.extent(1) == task.out_channels(), "loss: class count mismatch");
      Tensor<T> lp = cross_entropy(prelim_up, labels, task.ignore_label);
      Tensor<T> lf = cross_entropy(fin, labels, task.ignore_label);
      task_loss = add(scale(lp, static_cast<T>(prelim_weight)), lf);
    } else {
      Tensor<T> target = continuous_target<T>(sample, task);
      Tensor<T> lp = l1_loss(prelim_up, target);
      Tensor<T> lf = l1_loss(fin, target);
      task_loss = add(scale(lp, static_cast<T>(prelim_weight)), lf);
    }
    Tensor<T> weighted = scale(task_loss, static_cast<T>(task.loss_weight));
    result.per_task.push_back(static_cast<double>(weighted.item()));
    result.total = result.total.defined() ? add(result.total, weighted) : weighted;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainStepLog {
  int64_t iter = 0;
  double lr = 0;
  double total = 0;
  std::vector<double> per_task;
};

/// Deterministic single-threaded trainer: polynomial learning-rate decay,
/// gradient accumulation over the batch, Adam with decoupled weight decay.
template <typename T>
class Trainer {
 public:
  Trainer(InvPTModel<T>& model, int64_t total_iters)
      : model_(model),
        total_iters_(total_iters),
        adam_(AdamConfig<T>{static_cast<T>(model.config().lr), static_cast<T>(model.config().beta1),
                            static_cast<T>(model.config().beta2), static_cast<T>(model.config().adam_eps),
                            static_cast<T>(model.config().weight_decay)}) {
    if (total_iters < 1) throw std::invalid_argument("trainer: need at least one iteration");
  }

  int64_t iteration() const { return iter_; }
  void set_iteration(int64_t i) { iter_ = i; }
  int64_t total_iters() const { return total_iters_; }
  void set_total_iters(int64_t n) { total_iters_ = n; }

  double lr_at(int64_t i) const {
    return polynomial_lr(model_.config().lr, i, total_iters_, model_.config().poly_power);
  }

  /// Runs the remaining iterations against the training split, drawing
  /// batches round-robin. The callback sees every step's log (CSV writing,
  /// checkpointing and progress output live with the caller).
  template <typename Callback>
  void fit(const synth::Dataset& data, int64_t iters, Callback&& per_step) {
    const int64_t batch_size = model_.config().batch_size;
    std::vector<synth::Sample> batch;
    while (iter_ < iters) {
      batch.clear();
      for (int64_t j = 0; j < batch_size; ++j)
        batch.push_back(data.train(static_cast<size_t>(iter_ * batch_size + j)));
      per_step(step(batch));
    }
  }

  TrainStepLog step(std::span<const synth::Sample> batch) {
    require_shape(!batch.empty(), "trainer: empty batch");
    const double lr = lr_at(iter_);
    tape_.clear();
    model_.params().zero_grads();
    TrainStepLog log;
    log.iter = iter_;
    log.lr = lr;
    {
      TapeScope<T> scope(tape_);
      Tensor<T> total;
      std::vector<double> per_task(model_.config().tasks.size(), 0.0);
      for (const synth::Sample& sample : batch) {
        ModelOutput<T> out = model_.forward(model_.image_tensor(sample), /*training=*/true);
        LossBreakdown<T> lb =
            multitask_loss(out, sample, model_.config().tasks, model_.config().prelim_loss_weight);
        total = total.defined() ? add(total, lb.total) : lb.total;
        for (size_t t = 0; t < per_task.size(); ++t) per_task[t] += lb.per_task[t];
      }
      Tensor<T> loss = scale(total, T(1) / static_cast<T>(batch.size()));
      if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("training loss is non-finite");
      log.total = static_cast<double>(loss.item());
      for (double& v : per_task) v /= static_cast<double>(batch.size());
      log.per_task = std::move(per_task);
      tape_.backward(loss);
    }
    adam_.step(model_.params(), static_cast<T>(lr));
    tape_.clear();
    ++iter_;
    return log;
  }

 private:
  InvPTModel<T>& model_;
  int64_t total_iters_;
  Adam<T> adam_;
  Tape<T> tape_;
  int64_t iter_ = 0;
};

}  // namespace invpt
