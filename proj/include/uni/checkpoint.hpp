#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "uni/nn.hpp"

namespace uni {

// Self-describing binary checkpoint: header (JSON: version, config hash,
// stage lineage, vocab table, tensor directory), then little-endian f32
// payloads in directory order, then an FNV checksum of the payload bytes.
struct CheckpointMeta {
  int version = 1;
  uint64_t config_hash = 0;
  std::vector<std::string> lineage;  // e.g. {"tokenizer", "encoder", "stage1"}
  std::vector<std::string> vocab;
  uint64_t step_count = 0;

  bool has_stage(const std::string& s) const {
    for (const auto& l : lineage)
      if (l == s) return true;
    return false;
  }
};

void save_checkpoint(const std::string& path, const ParamStore<float>& store,
                     const CheckpointMeta& meta);

// Loads into an already-constructed store; every stored tensor must match a
// registered parameter's shape, and vice versa. Optimizer moments included.
CheckpointMeta load_checkpoint(const std::string& path, ParamStore<float>& store);

CheckpointMeta read_checkpoint_meta(const std::string& path);

}  // namespace uni
