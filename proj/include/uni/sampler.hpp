#pragma once

#include <string>
#include <vector>

#include "uni/config.hpp"
#include "uni/layout.hpp"
#include "uni/model.hpp"
#include "uni/semantic.hpp"
#include "uni/vocab.hpp"
#include "uni/vq.hpp"

namespace uni {

// Classifier-free guidance on logits: l_u + gamma * (l_c - l_u).
std::vector<float> cfg_combine(const std::vector<float>& cond, const std::vector<float>& uncond,
                               double gamma);

struct GenerationOutput {
  std::vector<int> emitted;  // unified ids after <boi>: codes, <eol>s, <eoi>
  std::vector<int> grid;     // parsed codebook indices, empty if malformed
  Image image;               // decoded, empty if malformed
  bool malformed = false;
  std::string error;
};

// Incremental (KV-cached) plain-float inference over the same weights the
// training path uses; no tape, suitable for long autoregressive rollouts.
class Sampler {
 public:
  Sampler(const ParamStore<float>& store, const BackboneConfig& cfg, const UnifiedVocab& vocab,
          const VqTokenizer<float>& vq, const SemanticEncoder<float>& sem);

  // Dual-stream CFG generation; `opt.constrained` forces <eol>/<eoi> at their
  // raster positions, otherwise structure tokens compete with codes.
  GenerationOutput generate(const std::vector<int>& prompt_ids, const SamplerConfig& opt) const;

  // Instruction edit of `source`; evidence mask ratio is 0 at inference. CFG
  // (instruction dropped from the unconditional stream) only if gamma != 1.
  GenerationOutput edit(const Image& source, const std::vector<int>& instruction_ids,
                        const SamplerConfig& opt, bool low_level_first = true,
                        double gamma = 1.0) const;

  // Greedy answer decoding for understanding; stops at <eos> or the cap.
  std::vector<std::string> answer(const Image& img, const std::vector<int>& question_ids,
                                  const SamplerConfig& opt) const;

  // Final-position hidden state / head logits after feeding a whole stream;
  // lets tests check agreement with the tape forward.
  std::vector<float> hidden_after(const TokenStream& stream) const;
  std::vector<float> logits_after(const TokenStream& stream, HeadSel sel) const;

 private:
  struct Session;
  GenerationOutput rollout(Session& cond, Session* uncond, int h, int w,
                           const SamplerConfig& opt, HeadSel head, double gamma) const;

  const ParamStore<float>* store_;
  BackboneConfig cfg_;
  const UnifiedVocab* vocab_;
  const VqTokenizer<float>* vq_;
  const SemanticEncoder<float>* sem_;
};

}  // namespace uni
