#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cfp/nn/params.hpp"

namespace cfp::nn {

// Binary layout, little-endian:
//   "CFP1", u32 version,
//   config: u32 n_conv, u32 channels[n_conv], u32 embed_dim, u32 in_height, u32 in_width,
//   u32 tensor_count, then per tensor:
//     u32 name_len, name bytes, u32 rank, u32 dims[rank], float32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamSet<float>& params);
ParamSet<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params);
ParamSet<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace cfp::nn
