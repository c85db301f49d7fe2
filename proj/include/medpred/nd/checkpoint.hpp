#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "medpred/nd/tensor.hpp"

namespace medpred::nd {

struct NamedTensor {
  std::string name;
  Tensor tensor;
  std::uint8_t flags = 0;  // bit 0: trainable, bit 1: L2-decayed
};

// Binary layout (all integers little-endian), see docs/checkpoint_format.md:
//   "MPCKPT01" | u32 count | count x { u32 name_len | name | u8 flags |
//   u32 rank | rank x u64 dim } | payload: every tensor's data as f64 LE, in order.
std::string encode_checkpoint(const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);

}  // namespace medpred::nd
