#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace invpt {

/// One dense prediction task: what the head emits, how it is supervised and
/// how it is scored. `lower_is_better` is the sign flag the multi-task
/// performance score needs.
struct TaskSpec {
  std::string name;
  bool discrete = true;
  int64_t channels = 2;  // class count for discrete tasks, map channels otherwise
  double loss_weight = 1.0;
  std::string metric = "miou";
  bool lower_is_better = false;
  int32_t ignore_label = -1;

  int64_t out_channels() const { return channels; }

  void validate() const {
    if (name.empty()) throw std::invalid_argument("task name empty");
    if (discrete && channels < 2) throw std::invalid_argument("discrete task needs >= 2 classes: " + name);
    if (!discrete && channels < 1) throw std::invalid_argument("continuous task needs >= 1 channel: " + name);
    if (loss_weight < 0) throw std::invalid_argument("negative loss weight: " + name);
  }
};

inline const TaskSpec& find_task(const std::vector<TaskSpec>& tasks, const std::string& name) {
  for (const auto& t : tasks) {
    if (t.name == name) return t;
  }
  throw std::invalid_argument("unknown task: " + name);
}

}  // namespace invpt
