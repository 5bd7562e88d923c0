#include "uni/layout.hpp"

#include <algorithm>
#include <cmath>

namespace uni {

namespace {

Slot discrete_slot(int id, int pos, bool loss = false) {
  Slot s;
  s.kind = Slot::Kind::Discrete;
  s.id = id;
  s.p1 = pos;
  s.loss = loss;
  return s;
}

void check_grid_supported(const UnifiedVocab& vocab, int h, int w) {
  if (vocab.supports_grid(h, w)) return;
  std::string hs, ws;
  for (int v : vocab.heights()) hs += std::to_string(v) + " ";
  for (int v : vocab.widths()) ws += std::to_string(v) + " ";
  throw std::invalid_argument("unsupported grid " + std::to_string(h) + "x" + std::to_string(w) +
                              "; supported heights: " + hs + "widths: " + ws);
}

// Appends <h>, <w>, <boi> and (optionally) the raster target segment.
void append_image_segment(TokenStream& s, const UnifiedVocab& vocab, const std::vector<int>* grid,
                          int h, int w) {
  int pos = static_cast<int>(s.slots.size());
  s.slots.push_back(discrete_slot(vocab.h_token(h), pos++));
  s.slots.push_back(discrete_slot(vocab.w_token(w), pos++));
  s.slots.push_back(discrete_slot(vocab.boi(), pos++));
  if (!grid) return;
  if (static_cast<int>(grid->size()) != h * w)
    throw std::invalid_argument("target grid size mismatch");
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c)
      s.slots.push_back(discrete_slot(vocab.code_to_id((*grid)[r * w + c]), pos++, true));
    s.slots.push_back(discrete_slot(vocab.eol(), pos++, true));
  }
  s.slots.push_back(discrete_slot(vocab.eoi(), pos++, true));
}

void append_semantic(TokenStream& s, const std::vector<std::vector<float>>& sem_grid, int sem_h,
                     int sem_w) {
  if (static_cast<int>(sem_grid.size()) != sem_h * sem_w)
    throw std::invalid_argument("semantic grid size mismatch");
  for (int r = 0; r < sem_h; ++r)
    for (int c = 0; c < sem_w; ++c) {
      Slot slot;
      slot.kind = Slot::Kind::Semantic;
      slot.feat = static_cast<int>(s.sem_feats.size());
      slot.pos2d = true;
      slot.p1 = r;
      slot.p2 = c;
      s.sem_feats.push_back(sem_grid[static_cast<size_t>(r) * sem_w + c]);
      s.slots.push_back(slot);
    }
}

void append_low_level(TokenStream& s, const std::vector<std::vector<float>>& low_feats,
                      const EditMaskPlan* plan) {
  int base = static_cast<int>(s.slots.size());
  for (size_t i = 0; i < low_feats.size(); ++i) {
    Slot slot;
    slot.kind = Slot::Kind::LowLevel;
    slot.feat = static_cast<int>(s.low_feats.size());
    slot.p1 = base + static_cast<int>(i);
    slot.masked = plan && std::binary_search(plan->masked.begin(), plan->masked.end(),
                                             static_cast<int>(i));
    s.low_feats.push_back(low_feats[i]);
    s.slots.push_back(slot);
  }
}

// Reindex 1-D positions to slot order after segments were appended out of
// final order (editing builder assembles segments conditionally).
void fix_linear_positions(TokenStream& s) {
  for (size_t i = 0; i < s.slots.size(); ++i)
    if (!s.slots[i].pos2d) s.slots[i].p1 = static_cast<int>(i);
}

}  // namespace

EditMaskPlan make_mask_plan(uint64_t seed, int n, double ratio) {
  if (ratio < 0.0 || ratio >= 1.0)
    throw std::invalid_argument("mask ratio must be in [0,1): " + std::to_string(ratio));
  EditMaskPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  int count = static_cast<int>(std::lround(ratio * n));
  std::vector<int> idx(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  Rng rng(derive_seed(seed, "edit-mask"));
  rng.shuffle(idx);
  plan.masked.assign(idx.begin(), idx.begin() + count);
  std::sort(plan.masked.begin(), plan.masked.end());
  return plan;
}

TokenStream build_generation_sequence(const UnifiedVocab& vocab, const std::vector<int>& prompt_ids,
                                      const std::vector<int>& grid, int h, int w) {
  check_grid_supported(vocab, h, w);
  TokenStream s;
  s.task = Task::Generate;
  s.grid_h = h;
  s.grid_w = w;
  int pos = 0;
  s.slots.push_back(discrete_slot(vocab.bos(), pos++));
  for (int id : prompt_ids) s.slots.push_back(discrete_slot(id, pos++));
  append_image_segment(s, vocab, &grid, h, w);
  return s;
}

TokenStream build_generation_prefix(const UnifiedVocab& vocab, const std::vector<int>& prompt_ids,
                                    int h, int w) {
  check_grid_supported(vocab, h, w);
  TokenStream s;
  s.task = Task::Generate;
  s.grid_h = h;
  s.grid_w = w;
  int pos = 0;
  s.slots.push_back(discrete_slot(vocab.bos(), pos++));
  for (int id : prompt_ids) s.slots.push_back(discrete_slot(id, pos++));
  append_image_segment(s, vocab, nullptr, h, w);
  return s;
}

TokenStream build_understanding_sequence(const UnifiedVocab& vocab,
                                         const std::vector<std::vector<float>>& sem_grid,
                                         int sem_h, int sem_w, const std::vector<int>& question_ids,
                                         const std::vector<int>& answer_ids) {
  TokenStream s = build_understanding_prefix(vocab, sem_grid, sem_h, sem_w, question_ids);
  for (int id : answer_ids) s.slots.push_back(discrete_slot(id, 0, true));
  s.slots.push_back(discrete_slot(vocab.eos(), 0, true));
  fix_linear_positions(s);
  return s;
}

TokenStream build_understanding_prefix(const UnifiedVocab& vocab,
                                       const std::vector<std::vector<float>>& sem_grid, int sem_h,
                                       int sem_w, const std::vector<int>& question_ids) {
  TokenStream s;
  s.task = Task::Understand;
  s.slots.push_back(discrete_slot(vocab.bos(), 0));
  append_semantic(s, sem_grid, sem_h, sem_w);
  for (int id : question_ids) s.slots.push_back(discrete_slot(id, 0));
  fix_linear_positions(s);
  return s;
}

TokenStream build_editing_prefix(const UnifiedVocab& vocab,
                                 const std::vector<std::vector<float>>& low_feats,
                                 const std::vector<std::vector<float>>& sem_grid, int sem_h,
                                 int sem_w, const std::vector<int>& instruction_ids, int h, int w,
                                 bool low_level_first) {
  check_grid_supported(vocab, h, w);
  TokenStream s;
  s.task = Task::Edit;
  s.grid_h = h;
  s.grid_w = w;
  s.slots.push_back(discrete_slot(vocab.bos(), 0));
  if (low_level_first) {
    append_low_level(s, low_feats, nullptr);
    append_semantic(s, sem_grid, sem_h, sem_w);
  } else {
    append_semantic(s, sem_grid, sem_h, sem_w);
    append_low_level(s, low_feats, nullptr);
  }
  for (int id : instruction_ids) s.slots.push_back(discrete_slot(id, 0));
  append_image_segment(s, vocab, nullptr, h, w);
  fix_linear_positions(s);
  return s;
}

TokenStream build_editing_sequence(const UnifiedVocab& vocab,
                                   const std::vector<std::vector<float>>& low_feats,
                                   const std::vector<std::vector<float>>& sem_grid, int sem_h,
                                   int sem_w, const std::vector<int>& instruction_ids,
                                   const std::vector<int>& target_grid, int h, int w,
                                   const EditMaskPlan& plan, bool low_level_first) {
  check_grid_supported(vocab, h, w);
  if (plan.ratio < 0.0 || plan.ratio >= 1.0) throw std::invalid_argument("mask ratio out of range");
  TokenStream s;
  s.task = Task::Edit;
  s.grid_h = h;
  s.grid_w = w;
  s.slots.push_back(discrete_slot(vocab.bos(), 0));
  if (low_level_first) {
    append_low_level(s, low_feats, &plan);
    append_semantic(s, sem_grid, sem_h, sem_w);
  } else {
    append_semantic(s, sem_grid, sem_h, sem_w);
    append_low_level(s, low_feats, &plan);
  }
  for (int id : instruction_ids) s.slots.push_back(discrete_slot(id, 0));
  append_image_segment(s, vocab, &target_grid, h, w);
  fix_linear_positions(s);
  return s;
}

std::vector<int> parse_generated_grid(const UnifiedVocab& vocab, const std::vector<int>& emitted,
                                      int h, int w) {
  std::vector<int> grid;
  grid.reserve(static_cast<size_t>(h) * w);
  int col = 0, row = 0;
  for (size_t i = 0; i < emitted.size(); ++i) {
    int id = emitted[i];
    if (id == vocab.eol()) {
      if (col != w) throw MalformedRaster("row length " + std::to_string(col) + " != width " +
                                          std::to_string(w), i);
      col = 0;
      ++row;
      continue;
    }
    if (id == vocab.eoi()) {
      if (row != h || col != 0) throw MalformedRaster("premature <eoi>", i);
      if (static_cast<int>(grid.size()) != h * w) throw MalformedRaster("incomplete raster", i);
      return grid;
    }
    if (vocab.category(id) != UnifiedVocab::Category::ImageCode)
      throw MalformedRaster("unexpected token " + vocab.name(id), i);
    if (row >= h || col >= w) throw MalformedRaster("missing <eol>", i);
    grid.push_back(vocab.id_to_code(id));
    ++col;
  }
  throw MalformedRaster("missing <eoi>", emitted.size());
}

}  // namespace uni
