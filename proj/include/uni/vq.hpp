#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "uni/image.hpp"
#include "uni/nn.hpp"
#include "uni/optimizer.hpp"

namespace uni {

struct VqConfig {
  int downsample = 4;     // f, power of two; image sides must be divisible
  int codebook_size = 256;
  int code_dim = 32;
  int hidden = 64;        // encoder/decoder channel width
  double commitment_beta = 0.25;
  double ema_decay = 0.99;
  double dead_code_threshold = 0.01;  // usage EMA below this gets re-seeded
  double lr = 1e-3;

  void validate() const {
    if (downsample < 1 || (downsample & (downsample - 1)) != 0)
      throw std::invalid_argument("vq: downsample factor must be a power of two");
    if (codebook_size < 2) throw std::invalid_argument("vq: codebook size must be >= 2");
  }
};

struct QuantizationResult {
  int h = 0, w = 0;  // grid shape
  std::vector<int> ids;                      // h*w codebook indices
  std::vector<std::vector<float>> pre_quant;  // encoder features before snapping
  std::vector<std::vector<float>> quantized;  // snapped features, == codes[ids]
};

struct VqPretrainStats {
  double recon_loss = 0, commit_loss = 0;
  double usage_fraction = 0;  // codes above the dead threshold
  int reseeded = 0;
  bool collapsed = false;  // usage fraction < 5%
};

namespace vqdetail {

// patch rows in raster order, each f*f*3 values scaled to [-1,1]
template <class R>
std::vector<R> patchify(const Image& img, int f, int& gh, int& gw) {
  if (img.h % f || img.w % f)
    throw std::invalid_argument("image side not divisible by downsample factor " +
                                std::to_string(f) + "; pad to a multiple of " + std::to_string(f));
  gh = img.h / f;
  gw = img.w / f;
  std::vector<R> out(static_cast<size_t>(gh) * gw * f * f * 3);
  size_t i = 0;
  for (int pr = 0; pr < gh; ++pr)
    for (int pc = 0; pc < gw; ++pc)
      for (int r = 0; r < f; ++r)
        for (int c = 0; c < f; ++c) {
          const float* p = img.at(pr * f + r, pc * f + c);
          for (int ch = 0; ch < 3; ++ch) out[i++] = static_cast<R>(p[ch] * 2.f - 1.f);
        }
  return out;
}

template <class R>
Image unpatchify(const std::vector<R>& patches, int gh, int gw, int f) {
  Image img(gh * f, gw * f);
  size_t i = 0;
  for (int pr = 0; pr < gh; ++pr)
    for (int pc = 0; pc < gw; ++pc)
      for (int r = 0; r < f; ++r)
        for (int c = 0; c < f; ++c) {
          float* p = img.at(pr * f + r, pc * f + c);
          for (int ch = 0; ch < 3; ++ch) p[ch] = static_cast<float>(patches[i++]);
        }
  return img;
}

// y = gelu-free raw affine: y[N x out] = x[N x in] * W + b
template <class R>
std::vector<R> affine(const std::vector<R>& x, int n, int in, const std::vector<R>& w,
                      const std::vector<R>& b, int out) {
  std::vector<R> y(static_cast<size_t>(n) * out);
  for (int i = 0; i < n; ++i) {
    R* yr = y.data() + static_cast<size_t>(i) * out;
    for (int j = 0; j < out; ++j) yr[j] = b[j];
    const R* xr = x.data() + static_cast<size_t>(i) * in;
    for (int p = 0; p < in; ++p) {
      R xv = xr[p];
      if (xv == R(0)) continue;
      const R* wr = w.data() + static_cast<size_t>(p) * out;
      for (int j = 0; j < out; ++j) yr[j] += xv * wr[j];
    }
  }
  return y;
}

template <class R>
void gelu_inplace(std::vector<R>& x) {
  for (auto& v : x) {
    R u = R(0.7978845608028654) * (v + R(0.044715) * v * v * v);
    v = R(0.5) * v * (R(1) + std::tanh(u));
  }
}

template <class R>
void sigmoid_inplace(std::vector<R>& x) {
  for (auto& v : x) v = R(1) / (R(1) + std::exp(-v));
}

}  // namespace vqdetail

// Small per-patch encoder / codebook / decoder. A strided "convolution" whose
// kernel equals its stride is a per-patch linear map, which keeps the whole
// stack expressible with the matmul primitives.
template <class R = float>
class VqTokenizer {
 public:
  VqTokenizer(ParamStore<R>& store, const VqConfig& cfg, Rng& rng) : cfg_(cfg), store_(&store) {
    cfg.validate();
    int in = cfg.downsample * cfg.downsample * 3;
    enc1_ = Linear<R>(store, "vq.enc1", "vq_tokenizer", in, cfg.hidden, rng);
    enc2_ = Linear<R>(store, "vq.enc2", "vq_tokenizer", cfg.hidden, cfg.hidden, rng);
    enc3_ = Linear<R>(store, "vq.enc3", "vq_tokenizer", cfg.hidden, cfg.code_dim, rng);
    dec1_ = Linear<R>(store, "vq.dec1", "vq_tokenizer", cfg.code_dim, cfg.hidden, rng);
    dec2_ = Linear<R>(store, "vq.dec2", "vq_tokenizer", cfg.hidden, cfg.hidden, rng);
    dec3_ = Linear<R>(store, "vq.dec3", "vq_tokenizer", cfg.hidden, in, rng);
    store.add_normal("vq.codebook", "vq_tokenizer", {cfg.codebook_size, cfg.code_dim}, rng, 0.5);
    store.add_const("vq.usage", "vq_tokenizer", {cfg.codebook_size}, R(1.0 / cfg.codebook_size));
    store.add_const("vq.ema_count", "vq_tokenizer", {cfg.codebook_size}, R(0));
    store.add_const("vq.ema_sum", "vq_tokenizer", {cfg.codebook_size, cfg.code_dim}, R(0));
  }

  const VqConfig& config() const { return cfg_; }

  // image -> encoder features, no quantization; rows in raster order
  std::vector<R> encode_features(const Image& img, int& gh, int& gw) const {
    auto x = vqdetail::patchify<R>(img, cfg_.downsample, gh, gw);
    int n = gh * gw;
    int in = cfg_.downsample * cfg_.downsample * 3;
    auto h1 = raw(enc1_, x, n, in, cfg_.hidden);
    vqdetail::gelu_inplace(h1);
    auto h2 = raw(enc2_, h1, n, cfg_.hidden, cfg_.hidden);
    vqdetail::gelu_inplace(h2);
    return raw(enc3_, h2, n, cfg_.hidden, cfg_.code_dim);
  }

  int nearest_code(const R* feat) const {
    const auto& codes = *store_->at("vq.codebook").val;
    int best = 0;
    R bd = std::numeric_limits<R>::max();
    for (int k = 0; k < cfg_.codebook_size; ++k) {
      const R* ck = codes.data() + static_cast<size_t>(k) * cfg_.code_dim;
      R d = 0;
      for (int j = 0; j < cfg_.code_dim; ++j) {
        R e = feat[j] - ck[j];
        d += e * e;
      }
      if (d < bd) {
        bd = d;
        best = k;
      }
    }
    return best;
  }

  QuantizationResult encode(const Image& img) const {
    QuantizationResult q;
    auto pre = encode_features(img, q.h, q.w);
    const auto& codes = *store_->at("vq.codebook").val;
    int n = q.h * q.w, d = cfg_.code_dim;
    q.ids.resize(static_cast<size_t>(n));
    q.pre_quant.resize(static_cast<size_t>(n));
    q.quantized.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const R* f = pre.data() + static_cast<size_t>(i) * d;
      int k = nearest_code(f);
      q.ids[static_cast<size_t>(i)] = k;
      q.pre_quant[static_cast<size_t>(i)].assign(f, f + d);
      const R* ck = codes.data() + static_cast<size_t>(k) * d;
      q.quantized[static_cast<size_t>(i)].assign(ck, ck + d);
    }
    return q;
  }

  Image decode(const std::vector<int>& ids, int gh, int gw) const {
    if (static_cast<int>(ids.size()) != gh * gw) throw std::invalid_argument("decode: id count mismatch");
    const auto& codes = *store_->at("vq.codebook").val;
    int n = gh * gw, d = cfg_.code_dim;
    std::vector<R> q(static_cast<size_t>(n) * d);
    for (int i = 0; i < n; ++i) {
      int k = ids[static_cast<size_t>(i)];
      if (k < 0 || k >= cfg_.codebook_size) throw std::out_of_range("decode: code id out of range");
      std::copy_n(codes.data() + static_cast<size_t>(k) * d, d, q.data() + static_cast<size_t>(i) * d);
    }
    return decode_features(q, gh, gw);
  }

  Image decode_features(const std::vector<R>& feats, int gh, int gw) const {
    int n = gh * gw;
    auto h1 = raw(dec1_, feats, n, cfg_.code_dim, cfg_.hidden);
    vqdetail::gelu_inplace(h1);
    auto h2 = raw(dec2_, h1, n, cfg_.hidden, cfg_.hidden);
    vqdetail::gelu_inplace(h2);
    int in = cfg_.downsample * cfg_.downsample * 3;
    auto out = raw(dec3_, h2, n, cfg_.hidden, in);
    vqdetail::sigmoid_inplace(out);
    return vqdetail::unpatchify(out, gh, gw, cfg_.downsample);
  }

  // One optimizer step on a batch of images: straight-through reconstruction
  // + commitment loss for the MLPs, EMA updates for the codebook.
  VqPretrainStats pretrain_step(const std::vector<Image>& batch, Rng& reseed_rng,
                                const AdamWConfig& opt = {}) {
    VqPretrainStats stats;
    Tape<R> tape;
    auto bound = store_->bind(frozen_all_but_vq());
    Tensor<R> total;
    std::vector<R> batch_feats;  // flattened pre-quant features for EMA / reseeding
    std::vector<int> batch_ids;
    for (const auto& img : batch) {
      int gh, gw;
      auto patches = vqdetail::patchify<R>(img, cfg_.downsample, gh, gw);
      int n = gh * gw;
      int in = cfg_.downsample * cfg_.downsample * 3;
      auto x = Tensor<R>::leaf({n, in}, patches, false);
      auto pre = enc3_(tape, bound, gelu(tape, enc2_(tape, bound, gelu(tape, enc1_(tape, bound, x)))));
      // snap to nearest codes off-tape
      std::vector<int> ids(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        ids[static_cast<size_t>(i)] = nearest_code(pre.data().data() + static_cast<size_t>(i) * cfg_.code_dim);
      auto codes_sel = gather_rows(tape, bound.at("vq.codebook"), ids);
      auto snapped = stop_grad(tape, codes_sel);
      // straight-through: value of snapped, gradient of pre
      auto quant = add(tape, pre, sub(tape, snapped, stop_grad(tape, pre)));
      auto dec = dec3_(tape, bound, gelu(tape, dec2_(tape, bound, gelu(tape, dec1_(tape, bound, quant)))));
      auto recon = sigmoid(tape, dec);
      std::vector<R> target(patches.size());
      for (size_t i = 0; i < patches.size(); ++i) target[i] = (patches[i] + R(1)) / R(2);
      auto rloss = mse_mean(tape, recon, Tensor<R>::leaf({n, in}, target, false));
      auto closs = mse_mean(tape, pre, snapped);
      stats.recon_loss += static_cast<double>(rloss.item());
      stats.commit_loss += static_cast<double>(closs.item());
      auto loss = add(tape, rloss, scale(tape, closs, R(cfg_.commitment_beta)));
      total = total.defined() ? add(tape, total, loss) : loss;
      batch_feats.insert(batch_feats.end(), pre.data().begin(), pre.data().end());
      batch_ids.insert(batch_ids.end(), ids.begin(), ids.end());
    }
    stats.recon_loss /= static_cast<double>(batch.size());
    stats.commit_loss /= static_cast<double>(batch.size());
    total = scale(tape, total, R(1) / static_cast<R>(batch.size()));
    tape.backward(total);
    // codebook is EMA-updated, not gradient-updated
    auto grads = collect_grads(*store_, bound);
    grads.erase("vq.codebook");
    clip_global_norm(grads, opt.grad_clip);
    adamw_step(*store_, grads, cfg_.lr, opt);
    ema_update(batch_feats, batch_ids, reseed_rng, stats);
    return stats;
  }

 private:
  std::set<std::string> frozen_all_but_vq() const {
    auto groups = store_->group_names();
    groups.erase("vq_tokenizer");
    return groups;
  }

  std::vector<R> raw(const Linear<R>& lin, const std::vector<R>& x, int n, int in, int out) const {
    return vqdetail::affine(x, n, in, *store_->at(lin.w).val, *store_->at(lin.b).val, out);
  }

  void ema_update(const std::vector<R>& feats, const std::vector<int>& ids, Rng& rng,
                  VqPretrainStats& stats) {
    int K = cfg_.codebook_size, d = cfg_.code_dim;
    auto& count = *store_->at("vq.ema_count").val;
    auto& sum = *store_->at("vq.ema_sum").val;
    auto& codes = *store_->at("vq.codebook").val;
    auto& usage = *store_->at("vq.usage").val;
    int n = static_cast<int>(ids.size());
    std::vector<R> bc(static_cast<size_t>(K), R(0));
    std::vector<R> bs(static_cast<size_t>(K) * d, R(0));
    for (int i = 0; i < n; ++i) {
      int k = ids[static_cast<size_t>(i)];
      bc[static_cast<size_t>(k)] += R(1);
      for (int j = 0; j < d; ++j)
        bs[static_cast<size_t>(k) * d + j] += feats[static_cast<size_t>(i) * d + j];
    }
    R g = static_cast<R>(cfg_.ema_decay);
    for (int k = 0; k < K; ++k) {
      count[static_cast<size_t>(k)] = g * count[static_cast<size_t>(k)] + (R(1) - g) * bc[static_cast<size_t>(k)];
      usage[static_cast<size_t>(k)] = g * usage[static_cast<size_t>(k)] + (R(1) - g) * bc[static_cast<size_t>(k)] / static_cast<R>(n);
      for (int j = 0; j < d; ++j) {
        size_t q = static_cast<size_t>(k) * d + j;
        sum[q] = g * sum[q] + (R(1) - g) * bs[q];
      }
      if (count[static_cast<size_t>(k)] > R(1e-3)) {
        for (int j = 0; j < d; ++j)
          codes[static_cast<size_t>(k) * d + j] = sum[static_cast<size_t>(k) * d + j] / count[static_cast<size_t>(k)];
      }
    }
    // dead-code re-seeding from random batch features
    int alive = 0;
    for (int k = 0; k < K; ++k) {
      if (usage[static_cast<size_t>(k)] * K >= static_cast<R>(cfg_.dead_code_threshold)) {
        ++alive;
        continue;
      }
      int src = static_cast<int>(rng.next_below(static_cast<uint64_t>(n)));
      for (int j = 0; j < d; ++j)
        codes[static_cast<size_t>(k) * d + j] = feats[static_cast<size_t>(src) * d + j];
      count[static_cast<size_t>(k)] = R(1);
      for (int j = 0; j < d; ++j)
        sum[static_cast<size_t>(k) * d + j] = feats[static_cast<size_t>(src) * d + j];
      ++stats.reseeded;
    }
    stats.usage_fraction = static_cast<double>(alive) / K;
    stats.collapsed = stats.usage_fraction < 0.05;
  }

  VqConfig cfg_;
  ParamStore<R>* store_;
  Linear<R> enc1_, enc2_, enc3_, dec1_, dec2_, dec3_;
};

}  // namespace uni
