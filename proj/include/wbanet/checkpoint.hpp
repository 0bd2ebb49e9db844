#pragma once

// Binary model checkpoint, all integers and floats little-endian:
//   "WBAN"  u32 version
//   config: u32 patch_size, u32 embed_dim, u32 n_heads, u32 n_blocks,
//           u32 epochs, u32 batch_size, u32 n_per_class, f64 lr, u64 seed
//   u32 tensor count, then per tensor:
//           u32 name length, name bytes, u32 rank, u64 extents[rank], f64 values[]

#include <cstdint>
#include <filesystem>
#include <string>

#include "wbanet/model.hpp"

namespace wbanet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    ModelConfig config;
    ModelParams params;
};

std::string encode_checkpoint(const ModelConfig& cfg, const ModelParams& params);
/// Throws FormatError on bad magic, unknown version, truncation or a tensor
/// that does not fit the architecture described by the config block.
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wbanet
