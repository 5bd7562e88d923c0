#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "uni/rng.hpp"
#include "uni/vocab.hpp"

namespace uni {

enum class Task { Understand = 0, Generate = 1, Edit = 2 };

// One sequence position. Discrete slots hold a unified-vocab id; continuous
// slots reference a row of the stream's feature matrices.
struct Slot {
  enum class Kind { Discrete, LowLevel, Semantic };
  Kind kind = Kind::Discrete;
  int id = -1;          // Discrete only
  int feat = -1;        // row into low_feats / sem_feats
  bool masked = false;  // LowLevel slot replaced by the learned mask embedding
  bool loss = false;
  bool pos2d = false;
  int p1 = 0, p2 = 0;  // 1-D: (index, 0); 2-D: (row, col)
};

struct TokenStream {
  Task task = Task::Generate;
  std::vector<Slot> slots;
  std::vector<std::vector<float>> low_feats;  // pre-quantization features, dim d
  std::vector<std::vector<float>> sem_feats;  // semantic embeddings, backbone width
  int grid_h = 0, grid_w = 0;                 // target grid, generate/edit only
};

// Training-time masking of low-level editing evidence. The masked index set
// is a pure function of (seed, n, ratio).
struct EditMaskPlan {
  double ratio = 0.6;
  uint64_t seed = 0;
  std::vector<int> masked;  // sorted, unique
};
EditMaskPlan make_mask_plan(uint64_t seed, int n, double ratio);

struct MalformedRaster : std::runtime_error {
  size_t offset;
  MalformedRaster(const std::string& msg, size_t off)
      : std::runtime_error(msg + " at offset " + std::to_string(off)), offset(off) {}
};

// [<bos>, prompt, <h=h>, <w=w>, <boi>, row ids with <eol> after every row,
// <eoi>]; loss from <boi>'s successor through <eoi>; all slots 1-D.
// `grid` holds codebook indices, row-major, h*w entries.
TokenStream build_generation_sequence(const UnifiedVocab& vocab, const std::vector<int>& prompt_ids,
                                      const std::vector<int>& grid, int h, int w);

// Prompt-side prefix only (inference); ends right after <boi>.
TokenStream build_generation_prefix(const UnifiedVocab& vocab, const std::vector<int>& prompt_ids,
                                    int h, int w);

// [<bos>, semantic slots (2-D), question, answer, <eos>]; loss on answer+<eos>.
TokenStream build_understanding_sequence(const UnifiedVocab& vocab,
                                         const std::vector<std::vector<float>>& sem_grid,
                                         int sem_h, int sem_w, const std::vector<int>& question_ids,
                                         const std::vector<int>& answer_ids);

// Question-only prefix for inference.
TokenStream build_understanding_prefix(const UnifiedVocab& vocab,
                                       const std::vector<std::vector<float>>& sem_grid, int sem_h,
                                       int sem_w, const std::vector<int>& question_ids);

// Default ordering: low-level (1-D, plan-masked) then semantic (2-D) then the
// instruction, then the target segment. `low_level_first=false` flips to the
// degraded ordering for the ablation.
TokenStream build_editing_sequence(const UnifiedVocab& vocab,
                                   const std::vector<std::vector<float>>& low_feats,
                                   const std::vector<std::vector<float>>& sem_grid, int sem_h,
                                   int sem_w, const std::vector<int>& instruction_ids,
                                   const std::vector<int>& target_grid, int h, int w,
                                   const EditMaskPlan& plan, bool low_level_first = true);

TokenStream build_editing_prefix(const UnifiedVocab& vocab,
                                 const std::vector<std::vector<float>>& low_feats,
                                 const std::vector<std::vector<float>>& sem_grid, int sem_h,
                                 int sem_w, const std::vector<int>& instruction_ids, int h, int w,
                                 bool low_level_first = true);

// Inverse of the raster layout: ids emitted after <boi> (codes, <eol>s and the
// final <eoi>) back to an h*w grid of codebook indices. Throws
// MalformedRaster with the offending offset.
std::vector<int> parse_generated_grid(const UnifiedVocab& vocab, const std::vector<int>& emitted,
                                      int h, int w);

// Expected emission length for an (h, w) grid: codes + h <eol>s + <eoi>.
inline size_t emission_length(int h, int w) {
  return static_cast<size_t>(h) * w + static_cast<size_t>(h) + 1;
}

}  // namespace uni
