#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "invpt/metrics.hpp"
#include "invpt/model.hpp"

namespace invpt {

/// Argmax over the channel axis of a [1,K,H,W] logit map.
template <typename T>
std::vector<int32_t> argmax_channels(const Tensor<T>& logits) {
  require_shape(logits.rank() == 4 && logits.extent(0) == 1, "argmax: [1,K,H,W] expected");
  const int64_t k = logits.extent(1), h = logits.extent(2), w = logits.extent(3);
  std::vector<int32_t> out(static_cast<size_t>(h * w));
  auto v = logits.values();
  for (int64_t p = 0; p < h * w; ++p) {
    int32_t best = 0;
    T best_v = v[p];
    for (int64_t c = 1; c < k; ++c) {
      const T cv = v[c * h * w + p];
      if (cv > best_v) {
        best_v = cv;
        best = static_cast<int32_t>(c);
      }
    }
    out[static_cast<size_t>(p)] = best;
  }
  return out;
}

/// Softmax probability of channel `cls` for a [1,K,H,W] logit map.
template <typename T>
std::vector<float> channel_probability(const Tensor<T>& logits, int64_t cls) {
  require_shape(logits.rank() == 4 && logits.extent(0) == 1, "probability: [1,K,H,W] expected");
  const int64_t k = logits.extent(1), h = logits.extent(2), w = logits.extent(3);
  require_shape(cls >= 0 && cls < k, "probability: channel out of range");
  std::vector<float> out(static_cast<size_t>(h * w));
  auto v = logits.values();
  for (int64_t p = 0; p < h * w; ++p) {
    T mx = v[p];
    for (int64_t c = 1; c < k; ++c) mx = std::max(mx, v[c * h * w + p]);
    T denom = 0;
    for (int64_t c = 0; c < k; ++c) denom += std::exp(v[c * h * w + p] - mx);
    out[static_cast<size_t>(p)] = static_cast<float>(std::exp(v[cls * h * w + p] - mx) / denom);
  }
  return out;
}

template <typename T>
std::vector<float> channel_values(const Tensor<T>& map) {
  require_shape(map.rank() == 4 && map.extent(0) == 1 && map.extent(1) == 1, "values: [1,1,H,W] expected");
  auto v = map.values();
  return std::vector<float>(v.begin(), v.end());
}

namespace evaldetail {

/// Per-task metric state for one shard of samples.
struct TaskAccumulator {
  std::unique_ptr<metrics::ConfusionAccumulator> confusion;
  metrics::RmseAccumulator rmse;
  metrics::FMeasureAccumulator fmeasure;
};

}  // namespace evaldetail

/// Evaluates the model over a set of samples, aggregating each task's metric
/// across the whole set (confusion counts for mIoU, squared error for RMSE,
/// per-threshold counts for the F-measures). Sharding across `jobs` threads
/// is safe because forward is read-only on parameters in eval mode; shards
/// merge in index order so the result is independent of scheduling.
template <typename T>
metrics::MetricReport evaluate_model(InvPTModel<T>& model, const std::vector<const synth::Sample*>& samples,
                                     int jobs = 1) {
  const auto& tasks = model.config().tasks;
  if (samples.empty()) throw std::invalid_argument("evaluate: no samples");
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(samples.size())));

  auto make_accumulators = [&]() {
    std::vector<evaldetail::TaskAccumulator> acc(tasks.size());
    for (size_t t = 0; t < tasks.size(); ++t) {
      if (tasks[t].metric == "miou") {
        acc[t].confusion = std::make_unique<metrics::ConfusionAccumulator>(
            static_cast<int>(tasks[t].channels), tasks[t].ignore_label);
      }
    }
    return acc;
  };

  auto run_shard = [&](size_t begin, size_t end, std::vector<evaldetail::TaskAccumulator>& acc) {
    for (size_t i = begin; i < end; ++i) {
      const synth::Sample& s = *samples[i];
      ModelOutput<T> out = model.forward(model.image_tensor(s), /*training=*/false);
      for (size_t t = 0; t < tasks.size(); ++t) {
        const TaskSpec& task = tasks[t];
        if (task.metric == "miou") {
          acc[t].confusion->add(argmax_channels(out.final[t]), discrete_labels(s, task));
        } else if (task.metric == "rmse") {
          acc[t].rmse.add(channel_values(out.final[t]), s.depth);
        } else if (task.metric == "maxf" || task.metric == "odsf") {
          acc[t].fmeasure.add(channel_probability(out.final[t], 1), discrete_labels(s, task));
        } else {
          throw std::invalid_argument("evaluate: unsupported metric " + task.metric);
        }
      }
    }
  };

  std::vector<std::vector<evaldetail::TaskAccumulator>> shards;
  if (jobs == 1) {
    shards.push_back(make_accumulators());
    run_shard(0, samples.size(), shards[0]);
  } else {
    shards.reserve(static_cast<size_t>(jobs));
    for (int j = 0; j < jobs; ++j) shards.push_back(make_accumulators());
    std::vector<std::thread> workers;
    const size_t chunk = (samples.size() + static_cast<size_t>(jobs) - 1) / static_cast<size_t>(jobs);
    for (int j = 0; j < jobs; ++j) {
      const size_t begin = static_cast<size_t>(j) * chunk;
      const size_t end = std::min(samples.size(), begin + chunk);
      if (begin >= end) break;
      workers.emplace_back([&, begin, end, j]() { run_shard(begin, end, shards[static_cast<size_t>(j)]); });
    }
    for (auto& w : workers) w.join();
  }

  // Merge in shard order for a scheduling-independent result.
  auto& total = shards[0];
  for (size_t j = 1; j < shards.size(); ++j) {
    for (size_t t = 0; t < tasks.size(); ++t) {
      if (total[t].confusion) total[t].confusion->merge(*shards[j][t].confusion);
      total[t].rmse.merge(shards[j][t].rmse);
      total[t].fmeasure.merge(shards[j][t].fmeasure);
    }
  }

  metrics::MetricReport report;
  for (size_t t = 0; t < tasks.size(); ++t) {
    const TaskSpec& task = tasks[t];
    double value = 0;
    if (task.metric == "miou") value = total[t].confusion->miou();
    else if (task.metric == "rmse") value = total[t].rmse.rmse();
    else if (task.metric == "maxf") value = total[t].fmeasure.max_f();
    else if (task.metric == "odsf") value = total[t].fmeasure.ods_f();
    report.rows.push_back({task.name, task.metric, value});
  }
  return report;
}

inline void write_report_csv(const metrics::MetricReport& report, const std::string& path,
                             double* delta = nullptr) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << "task,metric,value\n";
  f.precision(17);  // full double round trip, baselines must reload exactly
  for (const auto& row : report.rows) f << row.task << "," << row.metric << "," << row.value << "\n";
  if (delta) f << "ALL,delta_m," << *delta << "\n";
}

inline metrics::MetricReport read_report_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read report: " + path);
  metrics::MetricReport report;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string task, metric, value;
    std::getline(ss, task, ',');
    std::getline(ss, metric, ',');
    std::getline(ss, value, ',');
    if (task == "ALL") continue;
    report.rows.push_back({task, metric, std::stod(value)});
  }
  return report;
}

}  // namespace invpt
