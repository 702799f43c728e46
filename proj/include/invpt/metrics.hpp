#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "invpt/tasks.hpp"

namespace invpt::metrics {

constexpr int kThresholds = 255;  // evenly spaced at j/256, j = 1..255

inline double threshold_value(int j) { return static_cast<double>(j + 1) / 256.0; }

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

/// Dataset-aggregated per-class intersection/union counts.
class ConfusionAccumulator {
 public:
  explicit ConfusionAccumulator(int num_classes, int32_t ignore = -1)
      : num_classes_(num_classes), ignore_(ignore), inter_(static_cast<size_t>(num_classes), 0),
        pred_(static_cast<size_t>(num_classes), 0), gt_(static_cast<size_t>(num_classes), 0) {
    if (num_classes < 1) throw std::invalid_argument("miou: need at least one class");
  }

  void add(std::span<const int32_t> pred, std::span<const int32_t> gt) {
    if (pred.size() != gt.size()) throw std::invalid_argument("miou: map size mismatch");
    for (size_t i = 0; i < pred.size(); ++i) {
      if (gt[i] == ignore_) continue;
      if (gt[i] < 0 || gt[i] >= num_classes_ || pred[i] < 0 || pred[i] >= num_classes_)
        throw std::invalid_argument("miou: class id out of range");
      ++gt_[static_cast<size_t>(gt[i])];
      ++pred_[static_cast<size_t>(pred[i])];
      if (pred[i] == gt[i]) ++inter_[static_cast<size_t>(gt[i])];
    }
  }

  void merge(const ConfusionAccumulator& other) {
    for (size_t c = 0; c < inter_.size(); ++c) {
      inter_[c] += other.inter_[c];
      pred_[c] += other.pred_[c];
      gt_[c] += other.gt_[c];
    }
  }

  /// Mean IoU over classes present in the ground truth.
  double miou() const {
    double acc = 0;
    int present = 0;
    for (size_t c = 0; c < inter_.size(); ++c) {
      if (gt_[c] == 0) continue;
      const int64_t uni = gt_[c] + pred_[c] - inter_[c];
      acc += static_cast<double>(inter_[c]) / static_cast<double>(uni);
      ++present;
    }
    if (present == 0) throw std::invalid_argument("miou: ground truth has no labeled pixels");
    return acc / present;
  }

 private:
  int num_classes_;
  int32_t ignore_;
  std::vector<int64_t> inter_, pred_, gt_;
};

inline double miou(std::span<const int32_t> pred, std::span<const int32_t> gt, int num_classes,
                   int32_t ignore = -1) {
  ConfusionAccumulator acc(num_classes, ignore);
  acc.add(pred, gt);
  return acc.miou();
}

// ---------------------------------------------------------------------------
// Regression
// ---------------------------------------------------------------------------

class RmseAccumulator {
 public:
  void add(std::span<const float> pred, std::span<const float> gt, std::span<const uint8_t> mask = {}) {
    if (pred.size() != gt.size()) throw std::invalid_argument("rmse: size mismatch");
    if (!mask.empty() && mask.size() != pred.size()) throw std::invalid_argument("rmse: mask size mismatch");
    for (size_t i = 0; i < pred.size(); ++i) {
      if (!mask.empty() && !mask[i]) continue;
      const double d = static_cast<double>(pred[i]) - static_cast<double>(gt[i]);
      sq_sum_ += d * d;
      ++count_;
    }
  }

  void merge(const RmseAccumulator& o) {
    sq_sum_ += o.sq_sum_;
    count_ += o.count_;
  }

  double rmse() const {
    if (count_ == 0) throw std::invalid_argument("rmse: empty mask");
    return std::sqrt(sq_sum_ / static_cast<double>(count_));
  }

 private:
  double sq_sum_ = 0;
  int64_t count_ = 0;
};

inline double rmse(std::span<const float> pred, std::span<const float> gt, std::span<const uint8_t> mask = {}) {
  RmseAccumulator acc;
  acc.add(pred, gt, mask);
  return acc.rmse();
}

/// Mean angle in degrees between per-pixel 3-vectors stored planar
/// ([3, npix]); both fields are normalized per pixel first.
inline double mean_angular_error_deg(std::span<const float> pred, std::span<const float> gt, int64_t npix) {
  if (static_cast<int64_t>(pred.size()) != 3 * npix || static_cast<int64_t>(gt.size()) != 3 * npix)
    throw std::invalid_argument("mean_angular_error: 3-channel planar fields expected");
  if (npix == 0) throw std::invalid_argument("mean_angular_error: empty field");
  double acc = 0;
  for (int64_t i = 0; i < npix; ++i) {
    const double px = pred[i], py = pred[npix + i], pz = pred[2 * npix + i];
    const double gx = gt[i], gy = gt[npix + i], gz = gt[2 * npix + i];
    const double pn = std::sqrt(px * px + py * py + pz * pz);
    const double gn = std::sqrt(gx * gx + gy * gy + gz * gz);
    if (pn == 0 || gn == 0) throw std::invalid_argument("mean_angular_error: zero-length vector");
    double dot = (px * gx + py * gy + pz * gz) / (pn * gn);
    dot = std::clamp(dot, -1.0, 1.0);
    acc += std::acos(dot) * 180.0 / 3.14159265358979323846;
  }
  return acc / static_cast<double>(npix);
}

// ---------------------------------------------------------------------------
// F-measures
// ---------------------------------------------------------------------------

/// Per-threshold TP/FP/FN counts over a growing pixel set, histogrammed so a
/// full sweep costs one pass. Serves both the per-image max F-measure and the
/// dataset-scale optimal-threshold F1.
class FMeasureAccumulator {
 public:
  FMeasureAccumulator() : pos_hist_(kThresholds + 1, 0), neg_hist_(kThresholds + 1, 0) {}

  void add(std::span<const float> prob, std::span<const int32_t> gt) {
    if (prob.size() != gt.size()) throw std::invalid_argument("fmeasure: size mismatch");
    for (size_t i = 0; i < prob.size(); ++i) {
      const double p = prob[i];
      if (p < 0.0 || p > 1.0) throw std::invalid_argument("fmeasure: probability out of [0,1]");
      // bin = number of thresholds j with p >= threshold_value(j)
      int bin = static_cast<int>(std::floor(p * 256.0));
      bin = std::clamp(bin, 0, kThresholds);
      if (gt[i]) {
        ++total_pos_;
        ++pos_hist_[static_cast<size_t>(bin)];
      } else {
        ++neg_hist_[static_cast<size_t>(bin)];
      }
    }
    ++images_;
  }

  void merge(const FMeasureAccumulator& o) {
    for (size_t i = 0; i < pos_hist_.size(); ++i) {
      pos_hist_[i] += o.pos_hist_[i];
      neg_hist_[i] += o.neg_hist_[i];
    }
    total_pos_ += o.total_pos_;
    images_ += o.images_;
  }

  int64_t images() const { return images_; }

  /// Max over thresholds of F_beta with beta^2 = beta2 (0.3 by default).
  double max_f(double beta2 = 0.3) const {
    if (total_pos_ == 0) throw std::invalid_argument("fmeasure: ground truth is empty");
    double best = 0;
    int64_t tp = 0, fp = 0;
    // Walk thresholds from high to low, accumulating suffix counts.
    for (int j = kThresholds - 1; j >= 0; --j) {
      tp += pos_hist_[static_cast<size_t>(j + 1)];
      fp += neg_hist_[static_cast<size_t>(j + 1)];
      best = std::max(best, f_of(tp, fp, total_pos_ - tp, beta2));
    }
    return best;
  }

  /// F1 at the single threshold optimal over the accumulated set.
  double ods_f() const {
    if (images_ == 0) throw std::invalid_argument("fmeasure: empty dataset");
    if (total_pos_ == 0) throw std::invalid_argument("fmeasure: ground truth is empty");
    return max_f(1.0);
  }

  /// Threshold index achieving the optimum (for reporting).
  int best_threshold(double beta2 = 1.0) const {
    double best = -1;
    int best_j = 0;
    int64_t tp = 0, fp = 0;
    for (int j = kThresholds - 1; j >= 0; --j) {
      tp += pos_hist_[static_cast<size_t>(j + 1)];
      fp += neg_hist_[static_cast<size_t>(j + 1)];
      const double f = f_of(tp, fp, total_pos_ - tp, beta2);
      if (f > best) {
        best = f;
        best_j = j;
      }
    }
    return best_j;
  }

 private:
  static double f_of(int64_t tp, int64_t fp, int64_t fn, double beta2) {
    if (tp == 0) return 0.0;
    const double prec = static_cast<double>(tp) / static_cast<double>(tp + fp);
    const double rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
    return (1.0 + beta2) * prec * rec / (beta2 * prec + rec);
  }

  std::vector<int64_t> pos_hist_, neg_hist_;
  int64_t total_pos_ = 0;
  int64_t images_ = 0;
};

inline double max_f(std::span<const float> prob, std::span<const int32_t> gt, double beta2 = 0.3) {
  FMeasureAccumulator acc;
  acc.add(prob, gt);
  return acc.max_f(beta2);
}

/// Pixel-exact dataset-scale F1: one threshold chosen to maximize F1 with
/// TP/FP/FN aggregated over the whole dataset. No thinning or distance
/// tolerance, so values are not comparable to published boundary benchmarks.
inline double ods_f(const std::vector<std::pair<std::vector<float>, std::vector<int32_t>>>& dataset) {
  if (dataset.empty()) throw std::invalid_argument("ods_f: empty dataset");
  FMeasureAccumulator acc;
  for (const auto& [prob, gt] : dataset) acc.add(prob, gt);
  return acc.ods_f();
}

// ---------------------------------------------------------------------------
// Reports and the multi-task performance score
// ---------------------------------------------------------------------------

struct TaskMetric {
  std::string task;
  std::string metric;
  double value = 0;
};

struct MetricReport {
  std::vector<TaskMetric> rows;

  const TaskMetric* find(const std::string& task, const std::string& metric) const {
    for (const auto& r : rows) {
      if (r.task == task && r.metric == metric) return &r;
    }
    return nullptr;
  }
};

/// Mean signed relative improvement of a multi-task report over a single-task
/// baseline, in percent: (100/T) * sum_t (-1)^{l_t} (M_t - S_t) / S_t where
/// l_t flags lower-is-better metrics.
inline double delta_m(const MetricReport& multi, const MetricReport& baseline,
                      const std::vector<TaskSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("delta_m: no tasks");
  double acc = 0;
  for (const auto& spec : specs) {
    const TaskMetric* m = multi.find(spec.name, spec.metric);
    const TaskMetric* s = baseline.find(spec.name, spec.metric);
    if (!m || !s) throw std::invalid_argument("delta_m: reports do not cover task " + spec.name);
    if (s->value == 0) throw std::invalid_argument("delta_m: zero baseline for task " + spec.name);
    const double rel = (m->value - s->value) / s->value;
    acc += spec.lower_is_better ? -rel : rel;
  }
  return 100.0 * acc / static_cast<double>(specs.size());
}

}  // namespace invpt::metrics
