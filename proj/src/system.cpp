#include "uni/system.hpp"

#include <ostream>

namespace uni {

System::System(RunConfig config) : cfg(std::move(config)) {
  // The understanding stream feeds encoder embeddings straight into the
  // backbone, so the widths must match; embed_dim is derived, not configured.
  cfg.semantic.embed_dim = cfg.backbone.width;
  Rng rng(derive_seed(cfg.seed, "init", 0));
  vocab = UnifiedVocab(cfg.data.heights, cfg.data.widths, cfg.vq.codebook_size);
  vq = std::make_unique<VqTokenizer<float>>(store, cfg.vq, rng);
  sem = std::make_unique<SemanticEncoder<float>>(store, cfg.semantic, rng);
  model = std::make_unique<Model<float>>(store, cfg.backbone, vocab, cfg.vq.code_dim, rng);
  factory = std::make_unique<SampleFactory>(vocab, *vq, *sem, cfg.edit, cfg.data.cond_dropout);
}

VqPretrainStats System::pretrain_tokenizer(std::ostream* log) {
  Rng reseed(derive_seed(cfg.seed, "vq-reseed", 0));
  VqPretrainStats stats;
  int f = cfg.vq.downsample;
  for (int step = 0; step < cfg.vq_train.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, "vq-train", static_cast<uint64_t>(step)));
    std::vector<Image> batch;
    for (int i = 0; i < cfg.vq_train.batch; ++i) {
      auto b = cfg.data.buckets[rng.next_below(cfg.data.buckets.size())];
      batch.push_back(render(sample_scene(rng, b[0] * f, b[1] * f, Split::Train)));
    }
    stats = vq->pretrain_step(batch, reseed);
    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.vq_train.steps))
      (*log) << "vq step " << step << " recon " << stats.recon_loss << " usage "
             << stats.usage_fraction << "\n";
  }
  return stats;
}

ProxyStats System::pretrain_encoder(std::ostream* log) {
  Rng heads_rng(derive_seed(cfg.seed, "proxy-heads", 0));
  SemanticEncoder<float>::ProxyHeads heads(cfg.semantic.embed_dim, heads_rng);
  ProxyStats stats;
  int px = cfg.encoder_train.image_px;
  for (int step = 0; step < cfg.encoder_train.steps; ++step) {
    Rng rng(derive_seed(cfg.seed, "encoder-train", static_cast<uint64_t>(step)));
    std::vector<SceneSpec> batch;
    for (int i = 0; i < cfg.encoder_train.batch; ++i) {
      SceneSpec s = sample_scene(rng, px, px, Split::Train);
      s.objects.resize(1);
      batch.push_back(s);
    }
    stats = sem->pretrain_proxy_step(heads, batch);
    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.encoder_train.steps))
      (*log) << "encoder step " << step << " loss " << stats.loss << " shape-acc "
             << stats.accuracy << "\n";
  }
  return stats;
}

CheckpointMeta System::make_meta(std::vector<std::string> lineage) const {
  CheckpointMeta meta;
  meta.config_hash = cfg.hash();
  meta.lineage = std::move(lineage);
  meta.vocab = vocab.table();
  meta.step_count = static_cast<uint64_t>(store.step_count());
  return meta;
}

}  // namespace uni
