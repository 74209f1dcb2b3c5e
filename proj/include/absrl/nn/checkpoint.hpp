#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "absrl/nn/mlp.hpp"

namespace absrl::nn {

// Binary layout (host byte order):
//   "ABRLCKPT" | u32 version | u32 net_count
//   per net:   u32 name_len | name | u32 layer_count
//   per layer: u32 rows | u32 cols | f32 weight[rows*cols] (column-major) | f32 bias[rows]
inline constexpr std::uint32_t kCheckpointVersion = 1;

using NamedParams = std::pair<std::string, MlpParams<float>>;

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedParams>& nets);
std::vector<NamedParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace absrl::nn
