#pragma once

#include <cstdint>
#include <string>

#include "ynet/model.hpp"

namespace ynet {

struct Checkpoint {
  ModelConfig config;
  ModelParams<float> params;
  uint64_t step = 0;
};

std::string config_to_text(const ModelConfig& cfg);
ModelConfig config_from_text(const std::string& text);

// Binary layout: magic "YNET", u32 version (1), u32 config length + UTF-8
// config text, u32 tensor count, then per tensor: u16 name length, name,
// u8 rank, u64 dims[rank], float32 LE data; trailing u64 step count.
// Writes are atomic (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace ynet
