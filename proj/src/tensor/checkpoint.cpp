#include "gzk/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace gzk {

namespace {

constexpr const char* kMagic = "GZK1";

template <typename T>
void write_le(std::ostream& os, std::span<const T> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (T v : values) {
      char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
      os.write(bytes, sizeof(T));
    }
  }
}

template <typename T>
void read_le(std::istream& is, std::span<T> values) {
  is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if constexpr (std::endian::native != std::endian::little) {
    for (T& v : values) {
      char bytes[sizeof(T)];
      std::memcpy(bytes, &v, sizeof(T));
      for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
      std::memcpy(&v, bytes, sizeof(T));
    }
  }
}

nlohmann::json read_header(std::istream& is, const std::filesystem::path& path) {
  std::string magic, meta_line;
  if (!std::getline(is, magic) || magic != kMagic)
    throw std::runtime_error("not a GZK1 checkpoint: " + path.string());
  if (!std::getline(is, meta_line)) throw std::runtime_error("truncated checkpoint header: " + path.string());
  return nlohmann::json::parse(meta_line);
}

}  // namespace

template <typename T>
const Tensor<T>& CheckpointData<T>::find(const std::string& name) const {
  for (const auto& nt : tensors)
    if (nt.name == name) return nt.tensor;
  throw std::out_of_range("checkpoint has no tensor named '" + name + "'");
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor<T>>& tensors,
                     const nlohmann::json& meta) {
  nlohmann::json header;
  header["dtype"] = dtype_name<T>();
  header["meta"] = meta;
  auto& entries = header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& nt : tensors) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(nt.tensor.numel()) * sizeof(T);
    entries.push_back({{"name", nt.name}, {"shape", nt.tensor.shape()}, {"offset", offset}, {"bytes", bytes}});
    offset += bytes;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path.string());
    os << kMagic << '\n' << header.dump() << '\n';
    for (const auto& nt : tensors) write_le<T>(os, nt.tensor.data());
    if (!os) throw std::runtime_error("failed writing checkpoint: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

template <typename T>
CheckpointData<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  const nlohmann::json header = read_header(is, path);
  if (header.at("dtype").get<std::string>() != dtype_name<T>())
    throw std::runtime_error("checkpoint dtype " + header.at("dtype").get<std::string>() + " does not match " +
                             dtype_name<T>());
  const std::streampos payload = is.tellg();
  CheckpointData<T> out;
  out.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("tensors")) {
    Shape shape = e.at("shape").get<Shape>();
    const auto offset = e.at("offset").get<std::uint64_t>();
    const auto bytes = e.at("bytes").get<std::uint64_t>();
    if (static_cast<std::uint64_t>(numel(shape)) * sizeof(T) != bytes)
      throw std::runtime_error("checkpoint entry size mismatch for " + e.at("name").get<std::string>());
    std::vector<T> data(static_cast<std::size_t>(numel(shape)));
    is.seekg(payload + static_cast<std::streamoff>(offset));
    read_le<T>(is, data);
    if (!is) throw std::runtime_error("truncated checkpoint payload: " + path.string());
    out.tensors.push_back({e.at("name").get<std::string>(), Tensor<T>::from(std::move(shape), std::move(data))});
  }
  return out;
}

nlohmann::json read_checkpoint_meta(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path.string());
  return read_header(is, path).value("meta", nlohmann::json::object());
}

template struct CheckpointData<float>;
template struct CheckpointData<double>;
template void save_checkpoint<float>(const std::filesystem::path&, const std::vector<NamedTensor<float>>&,
                                     const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&, const std::vector<NamedTensor<double>>&,
                                      const nlohmann::json&);
template CheckpointData<float> load_checkpoint<float>(const std::filesystem::path&);
template CheckpointData<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace gzk
