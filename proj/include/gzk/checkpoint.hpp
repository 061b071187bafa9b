#pragma once

// Checkpoint file layout:
//   line 1: "GZK1"
//   line 2: one-line JSON {"dtype", "tensors": [{name, shape, offset, bytes}], "meta": {...}}
//   payload: little-endian scalars of every tensor in declaration order;
//            offsets are relative to the first payload byte.

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "gzk/tensor.hpp"
#include "json.hpp"

namespace gzk {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
struct CheckpointData {
  nlohmann::json meta;
  std::vector<NamedTensor<T>> tensors;

  /// Throws std::out_of_range when the name is absent.
  const Tensor<T>& find(const std::string& name) const;
};

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors,
                     const nlohmann::json& meta);

/// Reads a checkpoint; throws std::runtime_error on malformed files or a
/// dtype that differs from T.
template <typename T>
CheckpointData<T> load_checkpoint(const std::filesystem::path& path);

/// Reads only the metadata block.
nlohmann::json read_checkpoint_meta(const std::filesystem::path& path);

template <typename T>
constexpr const char* dtype_name() {
  return sizeof(T) == 4 ? "f32" : "f64";
}

}  // namespace gzk
