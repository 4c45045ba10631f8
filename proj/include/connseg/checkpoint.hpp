#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace connseg {

/// One named tensor as persisted in a CNW1 checkpoint.
struct CheckpointTensor {
  std::string name;
  std::vector<uint32_t> shape;
  std::vector<float> values;
};

// CNW1 layout, all integers little-endian u32:
//   magic "CNW1" | tensor count | per tensor:
//   name length | name bytes | rank | shape dims | raw f32 values.
void save_checkpoint(const std::filesystem::path& path,
                     const std::vector<CheckpointTensor>& tensors);
std::vector<CheckpointTensor> load_checkpoint(const std::filesystem::path& path);

}  // namespace connseg
