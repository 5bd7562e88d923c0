#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "uni/sampler.hpp"
#include "uni/scene.hpp"

namespace uni {

// Category-structured generation benchmark on the procedural detector:
// single_object, two_object, counting, colors, position, color_attribution.
struct GenEvalReport {
  std::map<std::string, double> category;
  double overall = 0;
  int n_per_category = 0;
};
GenEvalReport eval_generation(const Sampler& sampler, const UnifiedVocab& vocab,
                              const SamplerConfig& opt, int n_per_category, uint64_t seed,
                              Lang lang, std::ostream* jsonl = nullptr);

struct EditEvalReport {
  double compliance = 0;               // over non-Keep instructions
  double consistency = 0;              // unedited-pixel agreement with the source reconstruction
  double keep_consistency = 0;         // Keep instructions only (identity edits)
  std::map<std::string, double> compliance_by_kind;
  int n = 0;
};
EditEvalReport eval_editing(const Sampler& sampler, const UnifiedVocab& vocab,
                            const VqTokenizer<float>& vq, const SamplerConfig& opt, int n,
                            uint64_t seed, Lang lang, double gamma = 1.0,
                            std::ostream* jsonl = nullptr);

struct UnderstandingReport {
  double accuracy = 0;
  int n = 0;
};
UnderstandingReport eval_understanding(const Sampler& sampler, const UnifiedVocab& vocab,
                                       const SamplerConfig& opt, int n, uint64_t seed, Lang lang,
                                       std::ostream* jsonl = nullptr);

struct TokenizerReport {
  double psnr = 0;           // mean reconstruction PSNR on held-out scenes
  double baseline_psnr = 0;  // per-pixel train-mean image predictor
  double usage = 0;          // fraction of codes used at least once
  int n = 0;
};
TokenizerReport eval_tokenizer(const VqTokenizer<float>& vq, int n, uint64_t seed, int hpx,
                               int wpx);

}  // namespace uni
