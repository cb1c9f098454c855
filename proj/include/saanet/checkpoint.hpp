#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "saanet/kv_config.hpp"

namespace saanet {

inline constexpr uint32_t kCheckpointVersion = 1;

// Single-file archive:
//   "SAACKPT1" | u32 format_version | u32 n_kv | n_kv x (str key, str value)
//   | i64 step | u32 n_params | n_params x (str name, u32 ndim, ndim x i64,
//   float32 data)
// with str = u32 length + bytes, all integers and floats little-endian.
// The key-value block always carries `model_kind`.
struct Checkpoint {
  uint32_t format_version = kCheckpointVersion;
  KeyValues config;
  int64_t step = 0;
  std::vector<std::pair<std::string, torch::Tensor>> params;

  std::string model_kind() const { return kv_string(config, "model_kind", ""); }
};

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// Named float32 copies of every parameter of `module`.
std::vector<std::pair<std::string, torch::Tensor>> collect_parameters(torch::nn::Module& module);

// Copies checkpoint parameters into `module`; names and shapes must match
// exactly.
void load_parameters(torch::nn::Module& module, const Checkpoint& checkpoint);

}  // namespace saanet
