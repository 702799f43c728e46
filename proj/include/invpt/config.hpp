#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "invpt/model.hpp"

namespace invpt {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Flat dotted-key -> string map. The file format is `key = value` lines with
/// `#` comments; CLI `--set key=value` overrides are applied on top.
using ConfigMap = std::map<std::string, std::string>;

namespace cfgdetail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace cfgdetail

inline ConfigMap parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  ConfigMap map;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = cfgdetail::trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = cfgdetail::trim(line.substr(0, eq));
    const std::string val = cfgdetail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(path + ":" + std::to_string(lineno) + ": empty key");
    map[key] = val;
  }
  return map;
}

inline void apply_override(ConfigMap& map, const std::string& kv) {
  const size_t eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + kv);
  const std::string key = cfgdetail::trim(kv.substr(0, eq));
  const std::string val = cfgdetail::trim(kv.substr(eq + 1));
  if (key.empty()) throw ConfigError("override with empty key: " + kv);
  map[key] = val;
}

/// Defaults for the desk-scale setup: three tasks over 128x128 synthetic
/// scenes, a 6-layer toy encoder, a 3-stage decoder with message passing and
/// encoder feature aggregation on.
inline ConfigMap default_config() {
  return {
      {"seed", "0"},
      {"iters", "300"},
      {"jobs", "1"},
      {"out", "out"},
      {"batch_size", "2"},
      {"image.size", "128"},
      {"data.count", "16"},
      {"data.shapes", "6"},
      {"data.classes", "5"},
      {"tasks", "semseg,depth,boundary"},
      {"encoder.patch_size", "16"},
      {"encoder.embed_dim", "64"},
      {"encoder.depth", "6"},
      {"encoder.mlp_ratio", "2"},
      {"encoder.taps", "2,4,6"},
      {"model.c0", "64"},
      {"model.cd", "64"},
      {"model.stages", "3"},
      {"model.amp", "1"},
      {"model.efa", "1,1,1"},
      {"optimizer.lr", "0.001"},
      {"optimizer.weight_decay", "1e-6"},
      {"optimizer.beta1", "0.9"},
      {"optimizer.beta2", "0.999"},
      {"optimizer.eps", "1e-8"},
      {"optimizer.poly_power", "0.9"},
      {"loss.prelim_weight", "1.0"},
      {"train.checkpoint_every", "0"},
      {"train.resume", ""},
      {"eval.checkpoint", ""},
      {"eval.baseline", ""},
  };
}

/// Merges user entries over the defaults, rejecting unknown keys.
inline ConfigMap resolve_config(const ConfigMap& user) {
  ConfigMap resolved = default_config();
  for (const auto& [k, v] : user) {
    if (!resolved.count(k)) throw ConfigError("unknown config key: " + k);
    resolved[k] = v;
  }
  return resolved;
}

namespace cfgdetail {

inline int64_t to_int(const ConfigMap& m, const std::string& key) {
  try {
    size_t pos = 0;
    int64_t v = std::stoll(m.at(key), &pos);
    if (pos != m.at(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not an integer: '" + m.at(key) + "'");
  }
}

inline double to_double(const ConfigMap& m, const std::string& key) {
  try {
    size_t pos = 0;
    double v = std::stod(m.at(key), &pos);
    if (pos != m.at(key).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " is not a number: '" + m.at(key) + "'");
  }
}

inline bool to_bool(const ConfigMap& m, const std::string& key) {
  const std::string& v = m.at(key);
  if (v == "1" || v == "true" || v == "on") return true;
  if (v == "0" || v == "false" || v == "off") return false;
  throw ConfigError("config key " + key + " is not a boolean: '" + v + "'");
}

}  // namespace cfgdetail

/// Builds the task list from the `tasks` CSV; class counts for segmentation
/// come from the synthetic label space (data.classes shape classes plus
/// background).
inline std::vector<TaskSpec> tasks_from_config(const ConfigMap& m) {
  const int64_t classes = cfgdetail::to_int(m, "data.classes");
  std::vector<TaskSpec> tasks;
  for (const std::string& name : cfgdetail::split_csv(m.at("tasks"))) {
    TaskSpec t;
    t.name = name;
    if (name == "semseg") {
      t.discrete = true;
      t.channels = classes + 1;
      t.metric = "miou";
      t.lower_is_better = false;
    } else if (name == "depth") {
      t.discrete = false;
      t.channels = 1;
      t.metric = "rmse";
      t.lower_is_better = true;
    } else if (name == "boundary") {
      t.discrete = true;
      t.channels = 2;
      t.metric = "odsf";
      t.lower_is_better = false;
    } else if (name == "saliency") {
      t.discrete = true;
      t.channels = 2;
      t.metric = "maxf";
      t.lower_is_better = false;
    } else {
      throw ConfigError("unknown task in config: " + name);
    }
    tasks.push_back(std::move(t));
  }
  if (tasks.empty()) throw ConfigError("config selects no tasks");
  return tasks;
}

inline ModelConfig model_config_from(const ConfigMap& m) {
  ModelConfig cfg;
  cfg.image_size = cfgdetail::to_int(m, "image.size");
  cfg.encoder.patch_size = cfgdetail::to_int(m, "encoder.patch_size");
  cfg.encoder.embed_dim = cfgdetail::to_int(m, "encoder.embed_dim");
  cfg.encoder.depth = cfgdetail::to_int(m, "encoder.depth");
  cfg.encoder.mlp_ratio = cfgdetail::to_int(m, "encoder.mlp_ratio");
  cfg.encoder.tap_layers.clear();
  for (const std::string& s : cfgdetail::split_csv(m.at("encoder.taps")))
    cfg.encoder.tap_layers.push_back(std::stoll(s));
  cfg.tasks = tasks_from_config(m);
  cfg.c0 = cfgdetail::to_int(m, "model.c0");
  cfg.cd = cfgdetail::to_int(m, "model.cd");
  cfg.stages = static_cast<int>(cfgdetail::to_int(m, "model.stages"));
  cfg.amp = cfgdetail::to_bool(m, "model.amp");
  auto efa = cfgdetail::split_csv(m.at("model.efa"));
  if (efa.size() != 3) throw ConfigError("model.efa needs 3 comma-separated flags");
  for (size_t i = 0; i < 3; ++i) cfg.efa[i] = efa[i] == "1" || efa[i] == "true" || efa[i] == "on";
  cfg.lr = cfgdetail::to_double(m, "optimizer.lr");
  cfg.weight_decay = cfgdetail::to_double(m, "optimizer.weight_decay");
  cfg.beta1 = cfgdetail::to_double(m, "optimizer.beta1");
  cfg.beta2 = cfgdetail::to_double(m, "optimizer.beta2");
  cfg.adam_eps = cfgdetail::to_double(m, "optimizer.eps");
  cfg.poly_power = cfgdetail::to_double(m, "optimizer.poly_power");
  cfg.prelim_loss_weight = cfgdetail::to_double(m, "loss.prelim_weight");
  cfg.batch_size = cfgdetail::to_int(m, "batch_size");
  cfg.seed = static_cast<uint64_t>(cfgdetail::to_int(m, "seed"));
  cfg.validate();
  return cfg;
}

inline void write_resolved_config(const ConfigMap& m, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path);
  for (const auto& [k, v] : m) f << k << " = " << v << "\n";
}

}  // namespace invpt
