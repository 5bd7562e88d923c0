#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "uni/image.hpp"
#include "uni/nn.hpp"
#include "uni/optimizer.hpp"
#include "uni/scene.hpp"
#include "uni/vq.hpp"

namespace uni {

struct SemanticConfig {
  int patch = 8;       // p; deliberately different from the VQ factor
  int embed_dim = 128; // must equal backbone width, no adaptor in between
  int hidden = 128;
  double lr = 2e-3;
};

struct ProxyStats {
  double loss = 0;
  double accuracy = 0;  // shape-class accuracy on the batch
  double loss_shape = 0, loss_color = 0, loss_bg = 0;  // pooled heads
  double loss_patch_shape = 0, loss_patch_color = 0;   // per-patch heads
};

// Frozen continuous patch encoder; the high-level stream for understanding
// and editing. Pretrained once on a shape/color classification proxy, then
// bit-frozen through the main stages.
template <class R = float>
class SemanticEncoder {
 public:
  SemanticEncoder(ParamStore<R>& store, const SemanticConfig& cfg, Rng& rng)
      : cfg_(cfg), store_(&store) {
    int in = cfg.patch * cfg.patch * 3;
    fc1_ = Linear<R>(store, "enc.fc1", "semantic_encoder", in, cfg.hidden, rng);
    fc2_ = Linear<R>(store, "enc.fc2", "semantic_encoder", cfg.hidden, cfg.hidden, rng);
    fc3_ = Linear<R>(store, "enc.fc3", "semantic_encoder", cfg.hidden, cfg.embed_dim, rng);
  }

  const SemanticConfig& config() const { return cfg_; }

  // (H/p)x(W/p) grid of embeddings; each row one patch, raster order.
  std::vector<std::vector<float>> embed(const Image& img, int& gh, int& gw) const {
    auto x = vqdetail::patchify<R>(img, cfg_.patch, gh, gw);
    int n = gh * gw;
    int in = cfg_.patch * cfg_.patch * 3;
    auto h1 = raw(fc1_, x, n, in, cfg_.hidden);
    vqdetail::gelu_inplace(h1);
    auto h2 = raw(fc2_, h1, n, cfg_.hidden, cfg_.hidden);
    vqdetail::gelu_inplace(h2);
    auto e = raw(fc3_, h2, n, cfg_.hidden, cfg_.embed_dim);
    std::vector<std::vector<float>> grid(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      grid[static_cast<size_t>(i)].resize(static_cast<size_t>(cfg_.embed_dim));
      for (int j = 0; j < cfg_.embed_dim; ++j)
        grid[static_cast<size_t>(i)][static_cast<size_t>(j)] =
            static_cast<float>(e[static_cast<size_t>(i) * cfg_.embed_dim + j]);
    }
    return grid;
  }

  // Tape-based forward: per-patch embeddings [gh*gw, embed_dim].
  Tensor<R> embed_tape(Tape<R>& tape, const Bindings<R>& bound, const Image& img,
                       int& gh, int& gw) const {
    auto patches = vqdetail::patchify<R>(img, cfg_.patch, gh, gw);
    int in = cfg_.patch * cfg_.patch * 3;
    auto x = Tensor<R>::leaf({gh * gw, in}, patches, false);
    return fc3_(tape, bound, gelu(tape, fc2_(tape, bound, gelu(tape, fc1_(tape, bound, x)))));
  }

  // Tape-based forward for the proxy task: pooled embedding of one image.
  Tensor<R> embed_pooled(Tape<R>& tape, const Bindings<R>& bound, const Image& img) const {
    int gh, gw;
    return mean_rows(tape, embed_tape(tape, bound, img, gh, gw));
  }

  // Supervised proxy heads live in a scratch store so the main store keeps
  // exactly the eight contract parameter groups.
  struct ProxyHeads {
    ParamStore<R> store;
    Linear<R> shape_head, color_head, bg_head;
    // Per-patch auxiliary heads: shape-or-background (4-way) and majority
    // palette color. Local labels break the mean-pooling bottleneck so the
    // pooled probes converge in tens of steps instead of thousands.
    Linear<R> patch_shape_head, patch_color_head;
    ProxyHeads(int embed_dim, Rng& rng)
        : shape_head(store, "proxy.shape", "proxy", embed_dim, 3, rng),
          color_head(store, "proxy.color", "proxy", embed_dim, kNumColors, rng),
          bg_head(store, "proxy.bg", "proxy", embed_dim, kNumColors, rng),
          patch_shape_head(store, "proxy.patch_shape", "proxy", embed_dim, 4, rng),
          patch_color_head(store, "proxy.patch_color", "proxy", embed_dim, kNumColors, rng) {}
  };

  // One proxy-classification step on single-object scenes.
  ProxyStats pretrain_proxy_step(ProxyHeads& heads, const std::vector<SceneSpec>& batch,
                                 const AdamWConfig& opt = {}) {
    Tape<R> tape;
    auto frozen = store_->group_names();
    frozen.erase("semantic_encoder");
    auto bound = store_->bind(frozen);
    auto hbound = heads.store.bind({});
    Tensor<R> total;
    ProxyStats stats;
    for (const auto& spec : batch) {
      Image img = render(spec);
      int gh = 0, gw = 0;
      auto e = embed_tape(tape, bound, img, gh, gw);
      auto pooled = mean_rows(tape, e);
      const auto& obj = spec.objects.at(0);
      auto ls = cross_entropy_mean(tape, heads.shape_head(tape, hbound, pooled),
                                   {static_cast<int>(obj.shape)});
      auto lc = cross_entropy_mean(tape, heads.color_head(tape, hbound, pooled), {obj.color});
      auto lb = cross_entropy_mean(tape, heads.bg_head(tape, hbound, pooled), {spec.bg});
      auto plabels = patch_labels(img, spec, gh, gw);
      auto lps = cross_entropy_mean(tape, heads.patch_shape_head(tape, hbound, e), plabels.first);
      auto lpc = cross_entropy_mean(tape, heads.patch_color_head(tape, hbound, e), plabels.second);
      // Pooled signals are diluted ~|patches|/|object patches| by the mean;
      // up-weight them so their gradients compete with the per-patch terms.
      auto pooled_loss = scale(tape, add(tape, ls, lc), R(8));
      auto loss = add(tape, add(tape, pooled_loss, lb), add(tape, lps, lpc));
      stats.loss_shape += static_cast<double>(ls.item());
      stats.loss_color += static_cast<double>(lc.item());
      stats.loss_bg += static_cast<double>(lb.item());
      stats.loss_patch_shape += static_cast<double>(lps.item());
      stats.loss_patch_color += static_cast<double>(lpc.item());
      total = total.defined() ? add(tape, total, loss) : loss;
      // batch accuracy over the shape head
      auto logits = heads.shape_head(tape, hbound, pooled);
      const auto& lv = logits.data();
      int arg = 0;
      for (int j = 1; j < 3; ++j)
        if (lv[static_cast<size_t>(j)] > lv[static_cast<size_t>(arg)]) arg = j;
      stats.accuracy += arg == static_cast<int>(obj.shape) ? 1.0 : 0.0;
    }
    total = scale(tape, total, R(1) / static_cast<R>(batch.size()));
    stats.loss = static_cast<double>(total.item());
    stats.accuracy /= static_cast<double>(batch.size());
    double bn = static_cast<double>(batch.size());
    stats.loss_shape /= bn;
    stats.loss_color /= bn;
    stats.loss_bg /= bn;
    stats.loss_patch_shape /= bn;
    stats.loss_patch_color /= bn;
    tape.backward(total);
    auto genc = collect_grads(*store_, bound);
    auto ghead = collect_grads(heads.store, hbound);
    clip_global_norm(genc, opt.grad_clip);
    clip_global_norm(ghead, opt.grad_clip);
    adamw_step(*store_, genc, cfg_.lr, opt);
    adamw_step(heads.store, ghead, cfg_.lr, opt);
    return stats;
  }

 private:
  // Per-patch labels straight off the flat-color render. Only boundary
  // patches (mixed object/background pixels) carry the shape class — flat
  // patches are identical across shapes, so labeling them would be noise.
  // Color target is the object color wherever the object touches the patch,
  // else the background color, so object color gets its own feature subspace.
  std::pair<std::vector<int>, std::vector<int>> patch_labels(const Image& img,
                                                             const SceneSpec& spec,
                                                             int gh, int gw) const {
    std::vector<int> shape(static_cast<size_t>(gh) * gw), color(shape.size());
    const auto& oc = kPalette[static_cast<size_t>(spec.objects.at(0).color)];
    for (int pr = 0; pr < gh; ++pr)
      for (int pc = 0; pc < gw; ++pc) {
        int obj_px = 0, other_px = 0;
        for (int r = pr * cfg_.patch; r < (pr + 1) * cfg_.patch; ++r)
          for (int c = pc * cfg_.patch; c < (pc + 1) * cfg_.patch; ++c) {
            const float* p = img.at(r, c);
            bool is_obj =
                std::abs(p[0] - oc[0]) + std::abs(p[1] - oc[1]) + std::abs(p[2] - oc[2]) < 1e-3f;
            (is_obj ? obj_px : other_px)++;
          }
        size_t i = static_cast<size_t>(pr) * gw + pc;
        bool boundary = obj_px > 0 && other_px > 0;
        shape[i] = boundary ? static_cast<int>(spec.objects.at(0).shape) : 3;
        color[i] = obj_px > 0 ? spec.objects.at(0).color : spec.bg;
      }
    return {shape, color};
  }

  std::vector<R> raw(const Linear<R>& lin, const std::vector<R>& x, int n, int in, int out) const {
    return vqdetail::affine(x, n, in, *store_->at(lin.w).val, *store_->at(lin.b).val, out);
  }

  SemanticConfig cfg_;
  ParamStore<R>* store_;
  Linear<R> fc1_, fc2_, fc3_;
};

}  // namespace uni
