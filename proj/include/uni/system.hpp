#pragma once

#include <iosfwd>
#include <memory>

#include "uni/checkpoint.hpp"
#include "uni/config.hpp"
#include "uni/data.hpp"
#include "uni/model.hpp"
#include "uni/sampler.hpp"
#include "uni/semantic.hpp"
#include "uni/vocab.hpp"
#include "uni/vq.hpp"

namespace uni {

// The full component stack built from one RunConfig; the single place that
// wires vocab sizes, ties semantic.embed_dim to the backbone width, and runs
// the two pretraining phases that precede staged training.
struct System {
  RunConfig cfg;
  ParamStore<float> store;
  UnifiedVocab vocab;
  std::unique_ptr<VqTokenizer<float>> vq;
  std::unique_ptr<SemanticEncoder<float>> sem;
  std::unique_ptr<Model<float>> model;
  std::unique_ptr<SampleFactory> factory;

  explicit System(RunConfig config);

  Sampler sampler() const { return Sampler(store, cfg.backbone, vocab, *vq, *sem); }

  // Stage 0a: VQ tokenizer on random scene renders over the bucket sizes.
  VqPretrainStats pretrain_tokenizer(std::ostream* log = nullptr);
  // Stage 0b: semantic encoder on the shape/color classification proxy.
  ProxyStats pretrain_encoder(std::ostream* log = nullptr);

  CheckpointMeta make_meta(std::vector<std::string> lineage) const;
};

}  // namespace uni
