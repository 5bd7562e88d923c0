#include "uni/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace uni {

std::vector<float> cfg_combine(const std::vector<float>& cond, const std::vector<float>& uncond,
                               double gamma) {
  if (cond.size() != uncond.size())
    throw std::invalid_argument("cfg_combine: logit size mismatch");
  if (gamma == 0.0) return uncond;  // exact at the endpoints
  if (gamma == 1.0) return cond;
  std::vector<float> out(cond.size());
  for (size_t i = 0; i < cond.size(); ++i)
    out[i] = uncond[i] + static_cast<float>(gamma) * (cond[i] - uncond[i]);
  return out;
}

namespace {

void vecmat(const float* x, int in, const std::vector<float>& w, const std::vector<float>& b,
            int out, float* y) {
  for (int j = 0; j < out; ++j) y[j] = b[j];
  for (int p = 0; p < in; ++p) {
    float xv = x[p];
    if (xv == 0.f) continue;
    const float* wr = w.data() + static_cast<size_t>(p) * out;
    for (int j = 0; j < out; ++j) y[j] += xv * wr[j];
  }
}

void layernorm_row(const float* x, int d, const std::vector<float>& g,
                   const std::vector<float>& b, float* y) {
  float mean = 0;
  for (int i = 0; i < d; ++i) mean += x[i];
  mean /= d;
  float var = 0;
  for (int i = 0; i < d; ++i) {
    float e = x[i] - mean;
    var += e * e;
  }
  var /= d;
  float inv = 1.f / std::sqrt(var + 1e-5f);
  for (int i = 0; i < d; ++i) y[i] = (x[i] - mean) * inv * g[i] + b[i];
}

float gelu_scalar(float v) {
  float u = 0.7978845608028654f * (v + 0.044715f * v * v * v);
  return 0.5f * v * (1.f + std::tanh(u));
}

int sample_logits(Rng& rng, std::vector<float> logits, double temperature, int top_k) {
  int n = static_cast<int>(logits.size());
  for (auto& l : logits) l = static_cast<float>(l / temperature);
  if (top_k > 0 && top_k < n) {
    std::vector<float> sorted(logits);
    std::nth_element(sorted.begin(), sorted.begin() + (top_k - 1), sorted.end(),
                     std::greater<float>());
    float cut = sorted[static_cast<size_t>(top_k - 1)];
    for (auto& l : logits)
      if (l < cut) l = -std::numeric_limits<float>::infinity();
  }
  float mx = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  std::vector<double> p(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    p[static_cast<size_t>(i)] = std::exp(static_cast<double>(logits[static_cast<size_t>(i)] - mx));
    z += p[static_cast<size_t>(i)];
  }
  double u = rng.uniform() * z, acc = 0;
  for (int i = 0; i < n; ++i) {
    acc += p[static_cast<size_t>(i)];
    if (u < acc) return i;
  }
  return n - 1;
}

}  // namespace

struct Sampler::Session {
  const Sampler* s;
  std::vector<std::vector<float>> kcache, vcache;  // per layer, T*d flat
  std::vector<float> last;                         // residual stream of last position
  int len = 0;

  explicit Session(const Sampler* sampler) : s(sampler) {
    kcache.resize(static_cast<size_t>(s->cfg_.layers));
    vcache.resize(static_cast<size_t>(s->cfg_.layers));
  }

  const std::vector<float>& w(const std::string& n) const { return *s->store_->at(n).val; }

  // One position through all blocks; x is the embedded input row (with PE).
  void step(std::vector<float> x) {
    int d = s->cfg_.width, H = s->cfg_.heads, dh = d / H;
    float scale = 1.f / std::sqrt(static_cast<float>(dh));
    std::vector<float> xn(d), q(d), k(d), v(d), ctx(d), tmp(d);
    std::vector<float> ff(static_cast<size_t>(d) * s->cfg_.ff_mult);
    for (int l = 0; l < s->cfg_.layers; ++l) {
      std::string p = "backbone.block" + std::to_string(l);
      layernorm_row(x.data(), d, w(p + ".ln1.g"), w(p + ".ln1.b"), xn.data());
      vecmat(xn.data(), d, w(p + ".wq.w"), w(p + ".wq.b"), d, q.data());
      vecmat(xn.data(), d, w(p + ".wk.w"), w(p + ".wk.b"), d, k.data());
      vecmat(xn.data(), d, w(p + ".wv.w"), w(p + ".wv.b"), d, v.data());
      auto& kc = kcache[static_cast<size_t>(l)];
      auto& vc = vcache[static_cast<size_t>(l)];
      kc.insert(kc.end(), k.begin(), k.end());
      vc.insert(vc.end(), v.begin(), v.end());
      int T = len + 1;
      for (int h = 0; h < H; ++h) {
        std::vector<float> sc(static_cast<size_t>(T));
        float mx = -std::numeric_limits<float>::infinity();
        for (int t = 0; t < T; ++t) {
          const float* kr = kc.data() + static_cast<size_t>(t) * d + h * dh;
          float dot = 0;
          for (int j = 0; j < dh; ++j) dot += q[static_cast<size_t>(h * dh + j)] * kr[j];
          sc[static_cast<size_t>(t)] = dot * scale;
          mx = std::max(mx, sc[static_cast<size_t>(t)]);
        }
        float z = 0;
        for (int t = 0; t < T; ++t) {
          sc[static_cast<size_t>(t)] = std::exp(sc[static_cast<size_t>(t)] - mx);
          z += sc[static_cast<size_t>(t)];
        }
        for (int j = 0; j < dh; ++j) ctx[static_cast<size_t>(h * dh + j)] = 0;
        for (int t = 0; t < T; ++t) {
          float wt = sc[static_cast<size_t>(t)] / z;
          const float* vr = vc.data() + static_cast<size_t>(t) * d + h * dh;
          for (int j = 0; j < dh; ++j) ctx[static_cast<size_t>(h * dh + j)] += wt * vr[j];
        }
      }
      vecmat(ctx.data(), d, w(p + ".wo.w"), w(p + ".wo.b"), d, tmp.data());
      for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] += tmp[static_cast<size_t>(i)];
      layernorm_row(x.data(), d, w(p + ".ln2.g"), w(p + ".ln2.b"), xn.data());
      vecmat(xn.data(), d, w(p + ".fc1.w"), w(p + ".fc1.b"), d * s->cfg_.ff_mult, ff.data());
      for (auto& f : ff) f = gelu_scalar(f);
      vecmat(ff.data(), d * s->cfg_.ff_mult, w(p + ".fc2.w"), w(p + ".fc2.b"), d, tmp.data());
      for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] += tmp[static_cast<size_t>(i)];
    }
    last = std::move(x);
    ++len;
  }

  std::vector<float> hidden() const {
    std::vector<float> h(static_cast<size_t>(s->cfg_.width));
    layernorm_row(last.data(), s->cfg_.width, w("backbone.lnf.g"), w("backbone.lnf.b"), h.data());
    return h;
  }

  std::vector<float> head(HeadSel sel) const {
    std::string name;
    switch (sel) {
      case HeadSel::Text: name = "text_head.out"; break;
      case HeadSel::Generate: name = "gen_head.out"; break;
      default: name = s->cfg_.share_heads ? "gen_head.out" : "edit_head.out"; break;
    }
    auto hid = hidden();
    const auto& W = w(name + ".w");
    const auto& B = w(name + ".b");
    int out = static_cast<int>(B.size());
    std::vector<float> logits(static_cast<size_t>(out));
    vecmat(hid.data(), s->cfg_.width, W, B, out, logits.data());
    return logits;
  }

  std::vector<float> mlp2(const std::string& prefix, const float* x, int in) const {
    int d = s->cfg_.width;
    std::vector<float> h1(static_cast<size_t>(d)), h2(static_cast<size_t>(d));
    vecmat(x, in, w(prefix + ".fc1.w"), w(prefix + ".fc1.b"), d, h1.data());
    for (auto& v : h1) v = gelu_scalar(v);
    vecmat(h1.data(), d, w(prefix + ".fc2.w"), w(prefix + ".fc2.b"), d, h2.data());
    return h2;
  }

  std::vector<float> embed_slot(const Slot& slot, const TokenStream* stream) const {
    int d = s->cfg_.width;
    std::vector<float> x(static_cast<size_t>(d), 0.f);
    switch (slot.kind) {
      case Slot::Kind::Discrete: {
        if (slot.id < s->vocab_->code_base()) {
          const auto& emb = w("backbone.tok_emb");
          std::copy_n(emb.data() + static_cast<size_t>(slot.id) * d, d, x.data());
        } else {
          const auto& codes = w("vq.codebook");
          int cd = s->vq_->config().code_dim;
          x = mlp2("gen_adaptor",
                   codes.data() + static_cast<size_t>(slot.id - s->vocab_->code_base()) * cd, cd);
        }
        break;
      }
      case Slot::Kind::LowLevel: {
        if (slot.masked) {
          const auto& m = w("edit_adaptor.mask_emb");
          std::copy_n(m.data(), d, x.data());
        } else {
          const auto& f = stream->low_feats.at(static_cast<size_t>(slot.feat));
          x = mlp2("edit_adaptor", f.data(), static_cast<int>(f.size()));
        }
        break;
      }
      case Slot::Kind::Semantic: {
        const auto& f = stream->sem_feats.at(static_cast<size_t>(slot.feat));
        std::copy(f.begin(), f.end(), x.begin());
        break;
      }
    }
    std::vector<float> pe(static_cast<size_t>(d), 0.f);
    if (slot.pos2d) {
      sinusoidal_pe(slot.p1, d / 2, pe.data());
      sinusoidal_pe(slot.p2, d / 2, pe.data() + d / 2);
    } else {
      sinusoidal_pe(slot.p1, d, pe.data());
    }
    for (int i = 0; i < d; ++i) x[static_cast<size_t>(i)] += pe[static_cast<size_t>(i)];
    return x;
  }

  void feed_stream(const TokenStream& stream) {
    for (const auto& slot : stream.slots) step(embed_slot(slot, &stream));
  }

  void feed_token(int id) {
    Slot slot;
    slot.kind = Slot::Kind::Discrete;
    slot.id = id;
    slot.p1 = len;
    step(embed_slot(slot, nullptr));
  }
};

Sampler::Sampler(const ParamStore<float>& store, const BackboneConfig& cfg,
                 const UnifiedVocab& vocab, const VqTokenizer<float>& vq,
                 const SemanticEncoder<float>& sem)
    : store_(&store), cfg_(cfg), vocab_(&vocab), vq_(&vq), sem_(&sem) {}

std::vector<float> Sampler::hidden_after(const TokenStream& stream) const {
  Session ses(this);
  ses.feed_stream(stream);
  return ses.hidden();
}

std::vector<float> Sampler::logits_after(const TokenStream& stream, HeadSel sel) const {
  Session ses(this);
  ses.feed_stream(stream);
  return ses.head(sel);
}

GenerationOutput Sampler::rollout(Session& cond, Session* uncond, int h, int w,
                                  const SamplerConfig& opt, HeadSel head, double gamma) const {
  opt.validate();
  Rng rng(derive_seed(opt.seed, "rollout", 0));
  int eol = vocab_->eol(), eoi = vocab_->eoi(), base = vocab_->code_base();
  // text-head column indices of the structure tokens (text head covers
  // words + specials, so these ids index it directly)
  GenerationOutput out;
  size_t want = emission_length(h, w);
  int col = 0, row = 0;
  bool done = false;
  while (out.emitted.size() < want && !done) {
    bool expect_eol = col == w && row < h;
    bool expect_eoi = row == h;
    auto code_logits = cond.head(head);
    std::vector<float> text_logits;
    if (uncond) {
      code_logits = cfg_combine(code_logits, uncond->head(head), gamma);
    }
    int id;
    if (opt.constrained) {
      if (expect_eoi)
        id = eoi;
      else if (expect_eol)
        id = eol;
      else
        id = base + sample_logits(rng, code_logits, opt.temperature, opt.top_k);
    } else {
      // codes compete with <eol>/<eoi> in one categorical
      text_logits = cond.head(HeadSel::Text);
      if (uncond) text_logits = cfg_combine(text_logits, uncond->head(HeadSel::Text), gamma);
      std::vector<float> joint = code_logits;
      joint.push_back(text_logits[static_cast<size_t>(eol)]);
      joint.push_back(text_logits[static_cast<size_t>(eoi)]);
      int k = sample_logits(rng, joint, opt.temperature, opt.top_k);
      int K = static_cast<int>(code_logits.size());
      id = k < K ? base + k : (k == K ? eol : eoi);
    }
    out.emitted.push_back(id);
    if (id == eoi) done = true;
    if (id == eol) {
      ++row;
      col = 0;
    } else if (id != eoi) {
      ++col;
    }
    if (!done) {
      cond.feed_token(id);
      if (uncond) uncond->feed_token(id);
    }
  }
  try {
    out.grid = parse_generated_grid(*vocab_, out.emitted, h, w);
    out.image = vq_->decode(out.grid, h, w);
  } catch (const MalformedRaster& e) {
    out.malformed = true;
    out.error = e.what();
  }
  return out;
}

GenerationOutput Sampler::generate(const std::vector<int>& prompt_ids,
                                   const SamplerConfig& opt) const {
  int h = opt.grid_h, w = opt.grid_w;
  if (!vocab_->supports_grid(h, w))
    throw std::invalid_argument("unsupported grid " + std::to_string(h) + "x" + std::to_string(w));
  Session cond(this);
  cond.feed_stream(build_generation_prefix(*vocab_, prompt_ids, h, w));
  if (opt.gamma != 1.0) {
    Session uncond(this);
    uncond.feed_stream(build_generation_prefix(*vocab_, {}, h, w));
    return rollout(cond, &uncond, h, w, opt, HeadSel::Generate, opt.gamma);
  }
  return rollout(cond, nullptr, h, w, opt, HeadSel::Generate, opt.gamma);
}

GenerationOutput Sampler::edit(const Image& source, const std::vector<int>& instruction_ids,
                               const SamplerConfig& opt, bool low_level_first,
                               double gamma) const {
  auto q = vq_->encode(source);
  int sh, sw;
  auto sem = sem_->embed(source, sh, sw);
  Session cond(this);
  cond.feed_stream(build_editing_prefix(*vocab_, q.pre_quant, sem, sh, sw, instruction_ids, q.h,
                                        q.w, low_level_first));
  if (gamma != 1.0) {
    Session uncond(this);
    uncond.feed_stream(
        build_editing_prefix(*vocab_, q.pre_quant, sem, sh, sw, {}, q.h, q.w, low_level_first));
    return rollout(cond, &uncond, q.h, q.w, opt, HeadSel::Edit, gamma);
  }
  return rollout(cond, nullptr, q.h, q.w, opt, HeadSel::Edit, gamma);
}

std::vector<std::string> Sampler::answer(const Image& img, const std::vector<int>& question_ids,
                                         const SamplerConfig& opt) const {
  int sh, sw;
  auto sem = sem_->embed(img, sh, sw);
  Session ses(this);
  ses.feed_stream(build_understanding_prefix(*vocab_, sem, sh, sw, question_ids));
  std::vector<std::string> words;
  for (int i = 0; i < opt.answer_cap; ++i) {
    auto logits = ses.head(HeadSel::Text);
    int id = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
    if (id == vocab_->eos()) break;
    words.push_back(vocab_->name(id));
    ses.feed_token(id);
  }
  return words;
}

}  // namespace uni
