#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fairlink/tensor.hpp"

namespace fairlink {

// Binary layout, little-endian:
//   "FLNK1" | u8 tag length | tag bytes | u32 tensor count |
//   per tensor: u64 rows, u64 cols | all tensor values as f64, row-major, in order.
struct Checkpoint {
    std::string tag;
    std::vector<Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fairlink
