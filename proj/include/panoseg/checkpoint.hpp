#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "panoseg/tensor.hpp"

namespace panoseg {

// Checkpoint container: magic "TITN", format version (u32 LE), tensor count
// (u32 LE), then per tensor: name length (u32 LE) + name bytes, rank (u32 LE),
// dims (u64 LE each), and the payload as little-endian 32-bit floats.

inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

void write_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);

// Throws "bad checkpoint magic", "bad checkpoint version" or
// "truncated checkpoint".
std::vector<NamedTensor> read_checkpoint(const std::string& path);

}  // namespace panoseg
