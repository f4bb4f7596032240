#include "rhm/core/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace rhm::core {

namespace {

constexpr char kMagic[4] = {'H', 'M', 'K', 'T'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::istream& is, const std::string& path) {
  uint32_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), 4))
    throw std::runtime_error("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, 4);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(t.rank()));
    for (int d = 0; d < t.rank(); ++d) write_u32(os, static_cast<uint32_t>(t.dim(d)));
    os.write(reinterpret_cast<const char*>(t.ptr()),
             static_cast<std::streamsize>(t.size() * 4));
  }
  if (!os) throw std::runtime_error("write failed for checkpoint: " + path);
}

NamedTensors load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("bad checkpoint magic in " + path);
  uint32_t version = read_u32(is, path);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " +
                             std::to_string(version) + " in " + path);
  uint32_t count = read_u32(is, path);
  NamedTensors out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = read_u32(is, path);
    std::string name(name_len, '\0');
    if (!is.read(name.data(), name_len))
      throw std::runtime_error("truncated checkpoint: " + path);
    uint32_t rank = read_u32(is, path);
    Shape shape(rank);
    int64_t numel = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      shape[d] = static_cast<int>(read_u32(is, path));
      numel *= shape[d];
    }
    std::vector<float> data(static_cast<size_t>(numel));
    if (!is.read(reinterpret_cast<char*>(data.data()),
                 static_cast<std::streamsize>(numel * 4)))
      throw std::runtime_error("truncated checkpoint: " + path);
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  return out;
}

void load_checkpoint_into(const std::string& path, const NamedTensors& dest) {
  NamedTensors loaded = load_checkpoint(path);
  std::map<std::string, Tensor> by_name;
  for (auto& [name, t] : loaded) by_name.emplace(name, t);
  for (const auto& [name, t] : dest) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint " + path + " is missing tensor '" + name + "'");
    if (it->second.shape() != t.shape())
      throw std::runtime_error("checkpoint " + path + " tensor '" + name + "' has shape " +
                               shape_str(it->second.shape()) + ", expected " +
                               shape_str(t.shape()));
    Tensor dst = t;  // shared handle; writes land in the caller's tensor
    std::copy(it->second.data().begin(), it->second.data().end(), dst.data().begin());
  }
}

}  // namespace rhm::core
