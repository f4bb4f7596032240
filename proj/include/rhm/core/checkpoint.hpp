#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rhm/core/tensor.hpp"

namespace rhm::core {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

/// Little-endian binary checkpoint: magic "HMKT", version u32, tensor count
/// u32, then per tensor: name length u32, UTF-8 name, rank u32, dims
/// u32 x rank, f32 payload.
void save_checkpoint(const std::string& path, const NamedTensors& tensors);

/// Read every tensor in the file (fresh tensors, no grad).
NamedTensors load_checkpoint(const std::string& path);

/// Copy values from the file into existing tensors, matched by name.
/// Missing names or shape disagreements throw.
void load_checkpoint_into(const std::string& path, const NamedTensors& dest);

}  // namespace rhm::core
