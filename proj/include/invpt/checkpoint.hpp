#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "invpt/params.hpp"

namespace invpt {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  int64_t iteration = 0;
  std::map<std::string, std::string> config;
};

namespace detail {

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace detail

/// Writes `<dir>/manifest.json` plus `<dir>/weights.bin`. The manifest lists
/// every entry (name, shape, dtype, byte offset, trainable flag) in
/// lexicographic name order, which is also the blob layout. Raw values are
/// little-endian IEEE floats.
template <typename T>
void save_checkpoint(const ParamStore<T>& store, const CheckpointMeta& meta, const std::string& dir) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["format"] = "invpt-checkpoint";
  manifest["version"] = 1;
  manifest["iteration"] = meta.iteration;
  manifest["dtype"] = detail::dtype_name<T>();
  manifest["config"] = meta.config;

  std::ofstream blob(dir + "/weights.bin", std::ios::binary);
  if (!blob) throw CheckpointError("cannot open weights.bin for writing in " + dir);
  nlohmann::json params = nlohmann::json::array();
  int64_t offset = 0;
  for (size_t idx : store.name_order()) {
    const auto& e = store.entries()[idx];
    nlohmann::json rec;
    rec["name"] = e.name;
    rec["shape"] = e.tensor.shape();
    rec["dtype"] = detail::dtype_name<T>();
    rec["offset"] = offset;
    rec["trainable"] = e.trainable;
    params.push_back(std::move(rec));
    auto v = e.tensor.values();
    blob.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    offset += static_cast<int64_t>(v.size() * sizeof(T));
  }
  manifest["params"] = std::move(params);
  manifest["blob_bytes"] = offset;

  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw CheckpointError("cannot open manifest.json for writing in " + dir);
  mf << manifest.dump(2) << "\n";
}

/// Loads weights into an existing store. Every store entry must appear in the
/// manifest with a matching shape; unknown manifest names and short blobs are
/// integrity errors. Returns the stored iteration counter and config snapshot.
template <typename T>
CheckpointMeta load_checkpoint(ParamStore<T>& store, const std::string& dir) {
  static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw CheckpointError("missing manifest.json in " + dir);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("malformed manifest: ") + e.what());
  }
  if (manifest.value("format", "") != "invpt-checkpoint") throw CheckpointError("not an invpt checkpoint");
  if (manifest.value("dtype", "") != detail::dtype_name<T>())
    throw CheckpointError("checkpoint dtype mismatch: expected " + std::string(detail::dtype_name<T>()));

  std::ifstream blob(dir + "/weights.bin", std::ios::binary | std::ios::ate);
  if (!blob) throw CheckpointError("missing weights.bin in " + dir);
  const int64_t blob_size = static_cast<int64_t>(blob.tellg());
  const int64_t declared = manifest.value("blob_bytes", int64_t(-1));
  if (declared != blob_size)
    throw CheckpointError("weights.bin size " + std::to_string(blob_size) + " does not match manifest " +
                          std::to_string(declared));

  size_t matched = 0;
  for (const auto& rec : manifest.at("params")) {
    const std::string name = rec.at("name");
    Tensor<T>* t = store.find(name);
    if (!t) throw CheckpointError("unknown parameter name in checkpoint: " + name);
    const Shape shape = rec.at("shape").get<Shape>();
    if (shape != t->shape())
      throw CheckpointError("shape mismatch for " + name + ": checkpoint " + shape_str(shape) + " vs model " +
                            shape_str(t->shape()));
    const int64_t offset = rec.at("offset");
    const int64_t bytes = t->numel() * static_cast<int64_t>(sizeof(T));
    if (offset < 0 || offset + bytes > blob_size)
      throw CheckpointError("weights.bin truncated: record for " + name + " extends past end of blob");
    blob.seekg(offset);
    auto v = t->mutable_values();
    blob.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(bytes));
    if (!blob) throw CheckpointError("short read from weights.bin for " + name);
    ++matched;
  }
  if (matched != store.size())
    throw CheckpointError("checkpoint covers " + std::to_string(matched) + " of " +
                          std::to_string(store.size()) + " model tensors");

  CheckpointMeta meta;
  meta.iteration = manifest.value("iteration", int64_t(0));
  if (manifest.contains("config")) meta.config = manifest["config"].get<std::map<std::string, std::string>>();
  return meta;
}

}  // namespace invpt
