#pragma once

#include <string>
#include <vector>

#include "uni/config.hpp"
#include "uni/layout.hpp"
#include "uni/scene.hpp"
#include "uni/semantic.hpp"
#include "uni/vocab.hpp"
#include "uni/vq.hpp"

namespace uni {

// Builds fully-featured token streams for the three tasks. All sampling is
// deterministic given the Rng state; callers derive per-sample seeds.
class SampleFactory {
 public:
  SampleFactory(const UnifiedVocab& vocab, const VqTokenizer<float>& vq,
                const SemanticEncoder<float>& sem, const EditConfig& edit,
                double cond_dropout = 0.0)
      : vocab_(vocab), vq_(vq), sem_(sem), edit_(edit), cond_dropout_(cond_dropout) {}

  // grid_h/grid_w are code-grid sizes; pixel canvas is grid * vq downsample.
  TokenStream generation(Rng& rng, int grid_h, int grid_w, Split split) const;
  TokenStream understanding(Rng& rng, int grid_h, int grid_w, Split split) const;
  TokenStream editing(Rng& rng, int grid_h, int grid_w, Split split,
                      double mask_ratio) const;

  // Prompt/prefix material for evaluation.
  std::vector<int> encode_prompt(const std::vector<std::string>& words, Lang lang) const;

  const UnifiedVocab& vocab() const { return vocab_; }
  const VqTokenizer<float>& vq() const { return vq_; }
  const SemanticEncoder<float>& sem() const { return sem_; }

 private:
  const UnifiedVocab& vocab_;
  const VqTokenizer<float>& vq_;
  const SemanticEncoder<float>& sem_;
  EditConfig edit_;
  double cond_dropout_ = 0.0;
};

// Uniform bucket choice honouring the stage image policy.
std::array<int, 2> pick_bucket(Rng& rng, const DataConfig& data, const std::string& policy,
                               int step, int phase_a_steps);

// Optional corpus export: one directory per split with PNG images and a
// line-delimited metadata file.
void export_corpus(const std::string& dir, Split split, int count, uint64_t seed,
                   int hpx, int wpx);

}  // namespace uni
