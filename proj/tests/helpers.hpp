#pragma once

// Shared tiny-system fixture: full component stack at reduced width so the
// suites stay fast on one core.

#include <memory>

#include "uni/data.hpp"
#include "uni/model.hpp"
#include "uni/semantic.hpp"
#include "uni/vocab.hpp"
#include "uni/vq.hpp"

namespace unitest {

struct TinySystem {
  uni::ParamStore<float> store;
  uni::VqConfig vq_cfg;
  uni::SemanticConfig sem_cfg;
  uni::BackboneConfig bb_cfg;
  uni::UnifiedVocab vocab;
  std::unique_ptr<uni::VqTokenizer<float>> vq;
  std::unique_ptr<uni::SemanticEncoder<float>> sem;
  std::unique_ptr<uni::Model<float>> model;
  std::unique_ptr<uni::SampleFactory> factory;
  uni::EditConfig edit_cfg;

  explicit TinySystem(uint64_t seed = 1, bool share_heads = false) {
    uni::Rng rng(seed);
    vq_cfg.codebook_size = 32;
    vq_cfg.code_dim = 8;
    vq_cfg.hidden = 16;
    sem_cfg.embed_dim = 32;
    sem_cfg.hidden = 16;
    bb_cfg.layers = 2;
    bb_cfg.width = 32;
    bb_cfg.heads = 2;
    bb_cfg.ff_mult = 2;
    bb_cfg.share_heads = share_heads;
    vocab = uni::UnifiedVocab({8, 12, 16}, {8, 12, 16}, vq_cfg.codebook_size);
    vq = std::make_unique<uni::VqTokenizer<float>>(store, vq_cfg, rng);
    sem = std::make_unique<uni::SemanticEncoder<float>>(store, sem_cfg, rng);
    model = std::make_unique<uni::Model<float>>(store, bb_cfg, vocab, vq_cfg.code_dim, rng);
    factory = std::make_unique<uni::SampleFactory>(vocab, *vq, *sem, edit_cfg);
  }
};

}  // namespace unitest
