#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "uni/layout.hpp"
#include "uni/nn.hpp"
#include "uni/vocab.hpp"

namespace uni {

struct BackboneConfig {
  int layers = 3;
  int width = 128;
  int heads = 4;
  int ff_mult = 4;
  int max_positions = 1024;
  // Loss-conflict ablation: route edit-stream code targets through the
  // generation head instead of the dedicated edit head.
  bool share_heads = false;

  void validate() const {
    if (width % heads) throw std::invalid_argument("backbone: width not divisible by heads");
  }
};

enum class HeadSel { Text, Generate, Edit };

// 1-D sinusoidal encoding written into out[0..dim).
inline void sinusoidal_pe(double pos, int dim, float* out) {
  for (int i = 0; i < dim / 2; ++i) {
    double freq = std::pow(10000.0, -2.0 * i / dim);
    out[2 * i] = static_cast<float>(std::sin(pos * freq));
    out[2 * i + 1] = static_cast<float>(std::cos(pos * freq));
  }
}

// Per-slot positional rows: plain 1-D over the linear index, or factorized
// row/column halves for 2-D slots.
inline std::vector<float> positional_rows(const std::vector<Slot>& slots, int dim) {
  std::vector<float> out(slots.size() * static_cast<size_t>(dim), 0.f);
  for (size_t i = 0; i < slots.size(); ++i) {
    float* row = out.data() + i * static_cast<size_t>(dim);
    if (slots[i].pos2d) {
      sinusoidal_pe(slots[i].p1, dim / 2, row);
      sinusoidal_pe(slots[i].p2, dim / 2, row + dim / 2);
    } else {
      sinusoidal_pe(slots[i].p1, dim, row);
    }
  }
  return out;
}

template <class R>
struct LossBreakdown {
  Tensor<R> total;
  double und = 0, gen = 0, edit = 0;  // per-task means (0 when task absent)
  int n_und = 0, n_gen = 0, n_edit = 0;  // loss-slot counts per task
};

// Decoder-only causal backbone plus the added parts: generation/editing MLP
// adaptors, text head, generation head, edit head, learned mask embedding.
template <class R = float>
class Model {
 public:
  Model(ParamStore<R>& store, const BackboneConfig& cfg, const UnifiedVocab& vocab, int code_dim,
        Rng& rng)
      : cfg_(cfg), store_(&store), code_dim_(code_dim) {
    cfg.validate();
    text_width_ = vocab.text_head_width();
    code_base_ = vocab.code_base();
    k_codes_ = vocab.k_codes();
    int d = cfg.width;
    store.add_normal("backbone.tok_emb", "backbone", {text_width_, d}, rng, 0.02);
    for (int l = 0; l < cfg.layers; ++l) {
      std::string p = "backbone.block" + std::to_string(l);
      Block b;
      b.ln1 = LayerNormParams<R>(store, p + ".ln1", "backbone", d);
      b.wq = Linear<R>(store, p + ".wq", "backbone", d, d, rng);
      b.wk = Linear<R>(store, p + ".wk", "backbone", d, d, rng);
      b.wv = Linear<R>(store, p + ".wv", "backbone", d, d, rng);
      b.wo = Linear<R>(store, p + ".wo", "backbone", d, d, rng);
      b.ln2 = LayerNormParams<R>(store, p + ".ln2", "backbone", d);
      b.fc1 = Linear<R>(store, p + ".fc1", "backbone", d, d * cfg.ff_mult, rng);
      b.fc2 = Linear<R>(store, p + ".fc2", "backbone", d * cfg.ff_mult, d, rng);
      blocks_.push_back(b);
    }
    lnf_ = LayerNormParams<R>(store, "backbone.lnf", "backbone", d);
    text_head_ = Linear<R>(store, "text_head.out", "text_head", d, text_width_, rng);
    gen_adaptor_ = Mlp2<R>(store, "gen_adaptor", "gen_adaptor", code_dim, d, d, rng);
    gen_head_ = Linear<R>(store, "gen_head.out", "gen_head", d, k_codes_, rng);
    edit_adaptor_ = Mlp2<R>(store, "edit_adaptor", "edit_adaptor", code_dim, d, d, rng);
    edit_head_ = Linear<R>(store, "edit_head.out", "edit_head", d, k_codes_, rng);
    store.add_normal("edit_adaptor.mask_emb", "edit_adaptor", {1, d}, rng, 0.02);
  }

  const BackboneConfig& config() const { return cfg_; }
  int code_base() const { return code_base_; }
  int text_width() const { return text_width_; }

  // Per-slot hidden states [TxD]; strictly causal.
  Tensor<R> forward(Tape<R>& t, const Bindings<R>& p, const TokenStream& stream) const {
    int T = static_cast<int>(stream.slots.size());
    if (T > cfg_.max_positions)
      throw std::invalid_argument("stream length " + std::to_string(T) + " exceeds max positions " +
                                  std::to_string(cfg_.max_positions));
    int d = cfg_.width;
    // partition slots by embedding route
    std::vector<int> txt_ids, txt_rows, code_ids, code_rows, low_rows, mask_rows, sem_rows;
    std::vector<R> low_vals, sem_vals;
    for (int i = 0; i < T; ++i) {
      const Slot& s = stream.slots[static_cast<size_t>(i)];
      switch (s.kind) {
        case Slot::Kind::Discrete:
          if (s.id < code_base_) {
            txt_ids.push_back(s.id);
            txt_rows.push_back(i);
          } else {
            code_ids.push_back(s.id - code_base_);
            code_rows.push_back(i);
          }
          break;
        case Slot::Kind::LowLevel:
          if (s.masked) {
            mask_rows.push_back(i);
          } else {
            low_rows.push_back(i);
            const auto& f = stream.low_feats.at(static_cast<size_t>(s.feat));
            for (float v : f) low_vals.push_back(static_cast<R>(v));
          }
          break;
        case Slot::Kind::Semantic: {
          sem_rows.push_back(i);
          const auto& f = stream.sem_feats.at(static_cast<size_t>(s.feat));
          for (float v : f) sem_vals.push_back(static_cast<R>(v));
          break;
        }
      }
    }
    std::vector<std::pair<Tensor<R>, std::vector<int>>> parts;
    if (!txt_rows.empty())
      parts.emplace_back(gather_rows(t, p.at("backbone.tok_emb"), txt_ids), txt_rows);
    if (!code_rows.empty())
      parts.emplace_back(gen_adaptor_(t, p, gather_rows(t, p.at("vq.codebook"), code_ids)),
                         code_rows);
    if (!low_rows.empty()) {
      auto f = Tensor<R>::leaf({static_cast<int>(low_rows.size()), code_dim_}, low_vals, false);
      parts.emplace_back(edit_adaptor_(t, p, f), low_rows);
    }
    if (!mask_rows.empty())
      parts.emplace_back(repeat_row(t, p.at("edit_adaptor.mask_emb"), static_cast<int>(mask_rows.size())),
                         mask_rows);
    if (!sem_rows.empty())
      parts.emplace_back(Tensor<R>::leaf({static_cast<int>(sem_rows.size()), d}, sem_vals, false),
                         sem_rows);
    auto x = assemble_rows(t, T, d, std::move(parts));
    auto pe_f = positional_rows(stream.slots, d);
    std::vector<R> pe(pe_f.begin(), pe_f.end());
    x = add(t, x, Tensor<R>::leaf({T, d}, std::move(pe), false));

    int dh = d / cfg_.heads;
    R att_scale = R(1) / static_cast<R>(std::sqrt(static_cast<double>(dh)));
    for (const auto& b : blocks_) {
      auto xn = b.ln1(t, p, x);
      auto q = b.wq(t, p, xn), k = b.wk(t, p, xn), v = b.wv(t, p, xn);
      std::vector<Tensor<R>> ctx;
      for (int h = 0; h < cfg_.heads; ++h) {
        auto qh = slice_cols(t, q, h * dh, dh);
        auto kh = slice_cols(t, k, h * dh, dh);
        auto vh = slice_cols(t, v, h * dh, dh);
        auto scores = scale(t, matmul(t, qh, transpose2d(t, kh)), att_scale);
        auto w = causal_softmax(t, scores);
        ctx.push_back(matmul(t, w, vh));
      }
      x = add(t, x, b.wo(t, p, concat_cols(t, ctx)));
      auto ff = b.fc2(t, p, gelu(t, b.fc1(t, p, b.ln2(t, p, x))));
      x = add(t, x, ff);
    }
    return lnf_(t, p, x);
  }

  Tensor<R> head_logits(Tape<R>& t, const Bindings<R>& p, const Tensor<R>& hidden,
                        HeadSel sel) const {
    switch (sel) {
      case HeadSel::Text: return text_head_(t, p, hidden);
      case HeadSel::Generate: return gen_head_(t, p, hidden);
      default: return (cfg_.share_heads ? gen_head_ : edit_head_)(t, p, hidden);
    }
  }

  // Next-token loss of one stream under its task routing: code targets go to
  // the task's image head, text/special targets to the text head. Returns the
  // summed loss tensor and the slot count.
  std::pair<Tensor<R>, int> stream_loss_sum(Tape<R>& t, const Bindings<R>& p,
                                            const TokenStream& stream) const {
    auto hidden = forward(t, p, stream);
    std::vector<int> code_rows, code_tgt, txt_rows, txt_tgt;
    for (size_t i = 1; i < stream.slots.size(); ++i) {
      const Slot& s = stream.slots[i];
      if (!s.loss) continue;
      if (s.kind != Slot::Kind::Discrete)
        throw std::logic_error("loss mask on continuous slot");
      if (s.id >= code_base_) {
        code_rows.push_back(static_cast<int>(i) - 1);
        code_tgt.push_back(s.id - code_base_);
      } else {
        txt_rows.push_back(static_cast<int>(i) - 1);
        txt_tgt.push_back(s.id);
      }
    }
    int n = static_cast<int>(code_rows.size() + txt_rows.size());
    if (n == 0) throw std::invalid_argument("stream has empty loss support");
    HeadSel image_head = stream.task == Task::Edit ? HeadSel::Edit : HeadSel::Generate;
    Tensor<R> total;
    auto acc = [&](const std::vector<int>& rows, const std::vector<int>& tgt, HeadSel sel) {
      if (rows.empty()) return;
      auto logits = head_logits(t, p, select_rows(t, hidden, rows), sel);
      auto part = scale(t, cross_entropy_mean(t, logits, tgt), static_cast<R>(rows.size()));
      total = total.defined() ? add(t, total, part) : part;
    };
    acc(code_rows, code_tgt, image_head);
    acc(txt_rows, txt_tgt, HeadSel::Text);
    return {total, n};
  }

  // Eq.-1 loss per task, tasks weighted equally: mean over present tasks of
  // the task's per-slot mean.
  LossBreakdown<R> joint_loss(Tape<R>& t, const Bindings<R>& p,
                              const std::vector<TokenStream>& batch) const {
    Tensor<R> sums[3];
    int counts[3] = {0, 0, 0};
    for (const auto& stream : batch) {
      auto [loss, n] = stream_loss_sum(t, p, stream);
      int k = static_cast<int>(stream.task);
      sums[k] = sums[k].defined() ? add(t, sums[k], loss) : loss;
      counts[k] += n;
    }
    LossBreakdown<R> out;
    Tensor<R> total;
    int present = 0;
    for (int k = 0; k < 3; ++k) {
      if (counts[k] == 0) continue;
      ++present;
      auto task_mean = scale(t, sums[k], R(1) / static_cast<R>(counts[k]));
      double v = static_cast<double>(task_mean.item());
      if (k == 0) out.und = v;
      if (k == 1) out.gen = v;
      if (k == 2) out.edit = v;
      total = total.defined() ? add(t, total, task_mean) : task_mean;
    }
    if (!present) throw std::invalid_argument("batch has no loss-bearing streams");
    out.total = scale(t, total, R(1) / static_cast<R>(present));
    out.n_und = counts[0];
    out.n_gen = counts[1];
    out.n_edit = counts[2];
    return out;
  }

 private:
  struct Block {
    LayerNormParams<R> ln1, ln2;
    Linear<R> wq, wk, wv, wo, fc1, fc2;
  };

  BackboneConfig cfg_;
  ParamStore<R>* store_;
  int code_dim_, text_width_ = 0, code_base_ = 0, k_codes_ = 0;
  std::vector<Block> blocks_;
  LayerNormParams<R> lnf_;
  Linear<R> text_head_, gen_head_, edit_head_;
  Mlp2<R> gen_adaptor_, edit_adaptor_;
};

}  // namespace uni
