// Acceptance gate: twelve criteria, one PASS/FAIL line each. Criteria 1-7 and
// 12 are property checks at reduced scale; criteria 8-11 run the reference
// recipe (RunConfig defaults) end to end and measure quality on the
// procedural evaluators. Exit code = number of failed criteria.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "uni/evaluate.hpp"
#include "uni/system.hpp"
#include "uni/trainer.hpp"

using namespace uni;

namespace {

int g_failures = 0;
std::chrono::steady_clock::time_point g_t0;

double elapsed() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - g_t0).count();
}

void report(int num, const char* name, bool ok, const std::string& detail) {
  if (!ok) ++g_failures;
  std::printf("%s  %2d. %s — %s\n", ok ? "PASS" : "FAIL", num, name, detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

RunConfig small_config() {
  RunConfig cfg;
  cfg.seed = 71;
  cfg.backbone.width = 32;
  cfg.backbone.layers = 2;
  cfg.backbone.heads = 2;
  cfg.backbone.ff_mult = 2;
  cfg.vq.codebook_size = 32;
  cfg.vq.code_dim = 8;
  cfg.vq.hidden = 16;
  cfg.semantic.hidden = 16;
  return cfg;
}

// --- criterion 1: gradient fidelity --------------------------------------

double fd_model_max_rel_err() {
  ParamStore<double> store;
  Rng rng(404);
  UnifiedVocab vocab({4}, {4}, 16);
  BackboneConfig bb;
  bb.layers = 2;
  bb.width = 16;
  bb.heads = 2;
  bb.ff_mult = 2;
  Model<double> model(store, bb, vocab, /*code_dim=*/6, rng);
  store.add_normal("vq.codebook", "vq_tokenizer", {16, 6}, rng, 0.5);

  // one stream of each task, random content
  std::vector<TokenStream> batch;
  {
    std::vector<int> prompt = {vocab.bos(), 0, 1};
    std::vector<int> grid(16);
    for (auto& g : grid) g = rng.randint(0, 16);
    batch.push_back(build_generation_sequence(vocab, prompt, grid, 4, 4));
  }
  {
    std::vector<std::vector<float>> sem(4, std::vector<float>(16));
    for (auto& row : sem)
      for (auto& x : row) x = static_cast<float>(rng.normal(0, 0.5));
    batch.push_back(build_understanding_sequence(vocab, sem, 2, 2, {2, 3}, {1}));
  }
  {
    std::vector<std::vector<float>> low(16, std::vector<float>(6)),
        sem(4, std::vector<float>(16));
    for (auto& row : low)
      for (auto& x : row) x = static_cast<float>(rng.normal(0, 0.5));
    for (auto& row : sem)
      for (auto& x : row) x = static_cast<float>(rng.normal(0, 0.5));
    std::vector<int> tgt(16);
    for (auto& g : tgt) g = rng.randint(0, 16);
    auto plan = make_mask_plan(9, 16, 0.5);
    batch.push_back(build_editing_sequence(vocab, low, sem, 2, 2, {1, 2}, tgt, 4, 4, plan));
  }

  auto loss_value = [&]() {
    Tape<double> tape;
    auto bound = store.bind({});
    return model.joint_loss(tape, bound, batch).total.item();
  };

  double max_rel = 0;
  Rng pick(77);
  for (auto& p : store.params()) {
    // analytic gradient for this parameter
    Tape<double> tape;
    auto bound = store.bind({});
    auto breakdown = model.joint_loss(tape, bound, batch);
    tape.backward(breakdown.total);
    auto grad = bound.at(p.name).grad();
    if (grad.empty()) grad.assign(p.val->size(), 0.0);

    for (int trial = 0; trial < 3; ++trial) {
      size_t i = pick.next_below(p.val->size());
      double x0 = (*p.val)[i];
      const double h = 1e-5;
      (*p.val)[i] = x0 + h;
      double fp = loss_value();
      (*p.val)[i] = x0 - h;
      double fm = loss_value();
      (*p.val)[i] = x0;
      double fd = (fp - fm) / (2 * h);
      double an = grad[i];
      double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      max_rel = std::max(max_rel, std::abs(fd - an) / denom);
    }
  }
  return max_rel;
}

double fd_primitives_max_rel_err() {
  // composite scalar touching matmul, layer_norm, gelu, softmax_rows,
  // cross_entropy_mean, mean_rows, mul, slice_cols
  Rng rng(51);
  std::vector<double> xv(12), wv(16), gv(4, 1.0), bv(4, 0.0);
  for (auto& v : xv) v = rng.normal(0, 1);
  for (auto& v : wv) v = rng.normal(0, 1);
  auto value_and_grads = [&](bool want_grads, std::vector<double>& gx, std::vector<double>& gw) {
    Tape<double> tape;
    auto x = Tensor<double>::leaf({3, 4}, xv, true);
    auto w = Tensor<double>::leaf({4, 4}, wv, true);
    auto gamma = Tensor<double>::leaf({4}, gv, true);
    auto beta = Tensor<double>::leaf({4}, bv, true);
    auto h = gelu(tape, matmul(tape, x, w));
    auto n = layer_norm(tape, h, gamma, beta, 1e-5);
    auto s = softmax_rows(tape, slice_cols(tape, n, 0, 3));
    auto ce = cross_entropy_mean(tape, mul(tape, n, n), {1, 2, 0});
    auto out = add(tape, ce, mean(tape, s));
    double v = out.item();
    if (want_grads) {
      tape.backward(out);
      gx = x.grad();
      gw = w.grad();
    }
    return v;
  };
  std::vector<double> gx, gw;
  value_and_grads(true, gx, gw);
  double max_rel = 0;
  const double h = 1e-5;
  auto fd_check = [&](std::vector<double>& store_v, const std::vector<double>& an) {
    std::vector<double> d1, d2;
    for (size_t i = 0; i < store_v.size(); ++i) {
      double x0 = store_v[i];
      store_v[i] = x0 + h;
      double fp = value_and_grads(false, d1, d2);
      store_v[i] = x0 - h;
      double fm = value_and_grads(false, d1, d2);
      store_v[i] = x0;
      double fd = (fp - fm) / (2 * h);
      double denom = std::max({std::abs(fd), std::abs(an[i]), 1e-4});
      max_rel = std::max(max_rel, std::abs(fd - an[i]) / denom);
    }
  };
  fd_check(xv, gx);
  fd_check(wv, gw);
  return max_rel;
}

void criterion_1() {
  auto t0 = elapsed();
  double m_model = fd_model_max_rel_err();
  double m_prim = fd_primitives_max_rel_err();
  double dt = elapsed() - t0;
  bool ok = m_model < 1e-6 && m_prim < 1e-6 && dt < 60;
  report(1, "gradient fidelity (finite differences, 64-bit)", ok,
         fmt("max rel err model %.2e, primitives %.2e, %.1fs", m_model, m_prim, dt));
}

// --- criterion 2: loss correctness ---------------------------------------

void criterion_2() {
  RunConfig cfg = small_config();
  System sys(cfg);
  // zero every head parameter -> uniform logits everywhere
  for (auto& p : sys.store.params())
    if (p.group == "text_head" || p.group == "gen_head" || p.group == "edit_head")
      std::fill(p.val->begin(), p.val->end(), 0.f);

  Rng rng(5);
  auto gen = sys.factory->generation(rng, 8, 8, Split::Train);
  auto und = sys.factory->understanding(rng, 8, 8, Split::Train);
  double lnK = std::log(static_cast<double>(cfg.vq.codebook_size));
  double lnW = std::log(static_cast<double>(sys.vocab.text_head_width()));

  Tape<float> t1;
  auto bound = sys.store.bind({});
  auto bd = sys.model->joint_loss(t1, bound, {gen});
  // generation: h*w code targets at ln K, h+1 structure targets at ln W
  int n_code = 64, n_txt = 9;
  double expect_gen = (n_code * lnK + n_txt * lnW) / (n_code + n_txt);
  double err_gen = std::abs(bd.gen - expect_gen);

  Tape<float> t2;
  auto bd2 = sys.model->joint_loss(t2, bound, {und});
  double err_und = std::abs(bd2.und - lnW);

  // masked-position perturbation invariance, bit-exact
  Rng erng(6);
  auto edit = sys.factory->editing(erng, 8, 8, Split::Train, 0.6);
  Tape<float> t3;
  double base = static_cast<double>(sys.model->joint_loss(t3, bound, {edit}).total.item());
  TokenStream tweaked = edit;
  for (const auto& s : tweaked.slots)
    if (s.kind == Slot::Kind::LowLevel && s.masked)
      for (auto& x : tweaked.low_feats[static_cast<size_t>(s.feat)]) x += 10.f;
  Tape<float> t4;
  double pert = static_cast<double>(sys.model->joint_loss(t4, bound, {tweaked}).total.item());
  bool bitexact = std::memcmp(&base, &pert, sizeof base) == 0;

  bool ok = err_gen < 1e-4 && err_und < 1e-4 && bitexact;
  report(2, "loss correctness (uniform logits = ln V; mask invariance)", ok,
         fmt("|gen err| %.1e, |und err| %.1e, masked perturbation %s", err_gen, err_und,
             bitexact ? "bit-exact" : "CHANGED LOSS"));
}

// --- criterion 3: CFG identities -----------------------------------------

void criterion_3() {
  Rng rng(8);
  std::vector<float> c(12), u(12);
  for (auto& v : c) v = static_cast<float>(rng.normal(0, 2));
  for (auto& v : u) v = static_cast<float>(rng.normal(0, 2));

  bool id0 = cfg_combine(c, u, 0.0) == u;
  bool id1 = cfg_combine(c, u, 1.0) == c;

  auto argmax = [](const std::vector<float>& v) {
    return std::max_element(v.begin(), v.end()) - v.begin();
  };
  bool shift_ok = true;
  for (float s : {-3.f, 0.5f, 7.f}) {
    auto cs = c, us = u;
    for (auto& v : cs) v += s;
    for (auto& v : us) v += s;
    if (argmax(cfg_combine(cs, us, 3.0)) != argmax(cfg_combine(c, u, 3.0))) shift_ok = false;
  }

  auto worked = cfg_combine({2.f, 0.f}, {0.f, 0.f}, 3.0);
  bool example_ok = worked[0] == 6.f && worked[1] == 0.f;

  bool ok = id0 && id1 && shift_ok && example_ok;
  report(3, "CFG identities (gamma 0/1, shift invariance, worked example)", ok,
         fmt("gamma0 %s, gamma1 %s, shifts %s, [0,0]/[2,0]/g3 -> [%g,%g]", id0 ? "exact" : "BAD",
             id1 ? "exact" : "BAD", shift_ok ? "invariant" : "BAD", worked[0], worked[1]));
}

// --- criterion 4: freeze schedule ----------------------------------------

void criterion_4() {
  auto t0 = elapsed();
  RunConfig cfg = small_config();
  for (auto& s : cfg.stages) {
    s.steps = 50;
    s.steps2 = 0;
    s.batch = 4;
    s.warmup = 5;
  }
  System sys(cfg);
  Trainer trainer(sys.cfg, sys.store, *sys.model, *sys.factory);

  auto sums = [&]() {
    std::map<std::string, uint64_t> m;
    for (const auto& g : sys.store.group_names()) m[g] = sys.store.group_checksum(g);
    return m;
  };

  bool ok = true;
  std::string detail;
  auto before1 = sums();
  trainer.run_stage(1, nullptr);
  auto after1 = sums();
  for (const auto& [g, h] : before1) {
    bool moved = after1[g] != h;
    bool should = g == "gen_adaptor" || g == "gen_head";
    if (moved != should) {
      ok = false;
      detail += " stage1:" + g + (moved ? " moved" : " frozen");
    }
  }
  for (int stage = 2; stage <= 4; ++stage) {
    auto before = sums();
    trainer.run_stage(stage, nullptr);
    auto after = sums();
    for (const char* g : {"semantic_encoder", "vq_tokenizer"})
      if (after[g] != before[g]) {
        ok = false;
        detail += fmt(" stage%d:%s moved", stage, g);
      }
  }
  double dt = elapsed() - t0;
  ok = ok && dt < 600;
  report(4, "freeze schedule (50-step stages, group checksums)", ok,
         detail.empty() ? fmt("all groups honored, %.0fs", dt) : detail);
}

// --- criterion 5: sequence layout ----------------------------------------

void criterion_5() {
  RunConfig cfg = small_config();
  System sys(cfg);
  Rng rng(31);
  bool len_ok = true, eol_ok = true;
  for (auto b : cfg.data.buckets) {
    int h = b[0], w = b[1];
    std::vector<int> prompt(1 + rng.next_below(6), sys.vocab.bos());
    std::vector<int> grid(static_cast<size_t>(h) * w);
    for (auto& g : grid) g = static_cast<int>(rng.next_below(cfg.vq.codebook_size));
    auto s = build_generation_sequence(sys.vocab, prompt, grid, h, w);
    if (s.slots.size() != prompt.size() + static_cast<size_t>(h) * w + h + 5) len_ok = false;
    // <eol> after every completed row inside the raster segment
    size_t raster0 = prompt.size() + 4;  // bos is part of prompt here; layout: prompt,h,w,boi
    for (int r = 0; r < h; ++r) {
      size_t at = raster0 + static_cast<size_t>(r + 1) * w + r;
      if (s.slots.at(at).id != sys.vocab.eol()) eol_ok = false;
    }
  }

  int roundtrip_fail = 0;
  for (int n = 0; n < 10000; ++n) {
    auto b = cfg.data.buckets[rng.next_below(cfg.data.buckets.size())];
    int h = b[0], w = b[1];
    std::vector<int> grid(static_cast<size_t>(h) * w);
    for (auto& g : grid) g = static_cast<int>(rng.next_below(cfg.vq.codebook_size));
    std::vector<int> emitted;
    for (int r = 0; r < h; ++r) {
      for (int cc = 0; cc < w; ++cc)
        emitted.push_back(sys.vocab.code_to_id(grid[static_cast<size_t>(r) * w + cc]));
      emitted.push_back(sys.vocab.eol());
    }
    emitted.push_back(sys.vocab.eoi());
    try {
      if (parse_generated_grid(sys.vocab, emitted, h, w) != grid) ++roundtrip_fail;
    } catch (const MalformedRaster&) {
      ++roundtrip_fail;
    }
  }

  bool mask_ok = true;
  for (int n : {10, 64, 144, 256})
    if (static_cast<int>(make_mask_plan(3, n, 0.6).masked.size()) !=
        static_cast<int>(std::lround(0.6 * n)))
      mask_ok = false;

  bool ok = len_ok && eol_ok && roundtrip_fail == 0 && mask_ok;
  report(5, "sequence layout (length formula, <eol>, round-trip, mask count)", ok,
         fmt("lengths %s, eol %s, %d/10000 round-trip failures, mask %s", len_ok ? "ok" : "BAD",
             eol_ok ? "ok" : "BAD", roundtrip_fail, mask_ok ? "exact" : "BAD"));
}

// --- criterion 6: constrained decoding -----------------------------------

void criterion_6() {
  RunConfig cfg = small_config();
  System sys(cfg);
  auto sampler = sys.sampler();
  auto prompt = sys.factory->encode_prompt({"a", "red", "circle"}, Lang::EN);
  int malformed = 0, wrong_size = 0, total = 0;
  for (auto b : cfg.data.buckets) {
    SamplerConfig opt = cfg.sampler;
    opt.grid_h = b[0];
    opt.grid_w = b[1];
    opt.gamma = 1.0;  // single judgement per token; structure is the point here
    for (int n = 0; n < 1000; ++n) {
      opt.seed = static_cast<uint64_t>(n) + 1;
      auto out = sampler.generate(prompt, opt);
      ++total;
      if (out.malformed) {
        ++malformed;
        continue;
      }
      if (static_cast<int>(out.grid.size()) != b[0] * b[1] ||
          out.image.h != b[0] * cfg.vq.downsample || out.image.w != b[1] * cfg.vq.downsample)
        ++wrong_size;
    }
  }
  bool ok = malformed == 0 && wrong_size == 0;
  report(6, "constrained decoding (1000 seeded generations per bucket)", ok,
         fmt("%d generations, %d malformed, %d resolution mismatches", total, malformed,
             wrong_size));
}

// --- criterion 7: batch mixing -------------------------------------------

void criterion_7() {
  auto a = mix_batch({0, 1, 0}, 384);
  auto b = mix_batch({1, 1, 1}, 384);
  auto c = mix_batch({1, 4, 0}, 16);
  bool ok = a == std::array<int, 3>{0, 384, 0} && b == std::array<int, 3>{128, 128, 128} &&
            c == std::array<int, 3>{3, 13, 0} && mix_batch({1, 1, 1}, 384) == b;
  report(7, "batch mixing (Table-1 ratios, largest remainder, deterministic)", ok,
         fmt("0:1:0/384 -> %d/%d/%d, 1:1:1/384 -> %d/%d/%d", a[0], a[1], a[2], b[0], b[1], b[2]));
}

// --- criteria 8-11: reference recipe -------------------------------------

void criteria_8_to_11() {
  namespace fs = std::filesystem;
  RunConfig cfg;  // reference recipe = the defaults
  System sys(cfg);
  auto dir = fs::temp_directory_path() / "uni_acceptance";
  fs::create_directories(dir);

  std::printf("      [recipe] tokenizer pretraining (%d steps)\n", cfg.vq_train.steps);
  std::fflush(stdout);
  sys.pretrain_tokenizer(nullptr);
  uint64_t vq_sum = sys.store.group_checksum("vq_tokenizer");
  auto tok = eval_tokenizer(*sys.vq, cfg.eval.n_tokenizer, derive_seed(cfg.seed, "acc-tok", 0), 32,
                            32);

  std::printf("      [recipe] encoder pretraining (%d steps)\n", cfg.encoder_train.steps);
  std::fflush(stdout);
  sys.pretrain_encoder(nullptr);
  uint64_t sem_sum = sys.store.group_checksum("semantic_encoder");

  Trainer trainer(sys.cfg, sys.store, *sys.model, *sys.factory);
  std::string stage3_ckpt = (dir / "stage3.ckpt").string();
  for (int stage = 1; stage <= 4; ++stage) {
    std::printf("      [recipe] stage %d (%d steps)\n", stage, cfg.stage(stage).steps +
                                                                   cfg.stage(stage).steps2);
    std::fflush(stdout);
    auto r = trainer.run_stage(stage, nullptr);
    std::printf("      [recipe] stage %d final loss %.4f\n", stage, r.final_loss);
    std::fflush(stdout);
    if (stage == 3) save_checkpoint(stage3_ckpt, sys.store, sys.make_meta({"stage3"}));
  }

  bool frozen_ok =
      sys.store.group_checksum("vq_tokenizer") == vq_sum &&
      sys.store.group_checksum("semantic_encoder") == sem_sum;
  double gain = tok.psnr - tok.baseline_psnr;
  bool c8 = gain >= 6.0 && tok.usage >= 0.30 && frozen_ok;
  report(8, "tokenizer quality (PSNR gain >= 6 dB, usage >= 30%, frozen)", c8,
         fmt("psnr %.2f vs baseline %.2f (+%.2f dB), usage %.0f%%, %s", tok.psnr,
             tok.baseline_psnr, gain, 100 * tok.usage, frozen_ok ? "frozen" : "CHANGED"));

  auto sampler = sys.sampler();
  uint64_t eseed = derive_seed(cfg.seed, "acc-eval", 0);

  std::printf("      [recipe] toy-GenEval (gamma=%g)\n", cfg.sampler.gamma);
  std::fflush(stdout);
  std::ofstream genlog((dir / "geneval_en.jsonl").string());
  auto gen3 = eval_generation(sampler, sys.vocab, cfg.sampler, cfg.eval.n_generation, eseed,
                              Lang::EN, &genlog);
  SamplerConfig g0 = cfg.sampler;
  g0.gamma = 0.0;
  std::printf("      [recipe] toy-GenEval (gamma=0)\n");
  std::fflush(stdout);
  auto gen0 = eval_generation(sampler, sys.vocab, g0, cfg.eval.n_generation, eseed, Lang::EN);
  bool c9 = gen3.category.at("single_object") >= 0.90 && gen3.overall >= 0.60 &&
            gen3.overall > gen0.overall;
  report(9, "generation quality (Single-Obj >= 0.90, overall >= 0.60, CFG helps)", c9,
         fmt("single %.2f, overall %.2f (gamma3) vs %.2f (gamma0)",
             gen3.category.at("single_object"), gen3.overall, gen0.overall));

  std::printf("      [recipe] editing eval\n");
  std::fflush(stdout);
  std::ofstream editlog((dir / "editing.jsonl").string());
  auto ed = eval_editing(sampler, sys.vocab, *sys.vq, cfg.sampler, cfg.eval.n_edit, eseed,
                         Lang::EN, cfg.edit.cfg_for_edit ? cfg.sampler.gamma : 1.0, &editlog);

  // mask-ratio sweep: stage 4 retrained from the stage-3 checkpoint per rho
  // (shortened stage-4 schedule; the report is directional, not numeric)
  std::vector<std::string> sweep_rows;
  bool sweep_complete = true;
  for (double rho : {0.5, 0.6, 0.75}) {
    std::printf("      [recipe] sweep rho=%.2f\n", rho);
    std::fflush(stdout);
    RunConfig scfg;
    scfg.edit.mask_ratio = rho;
    scfg.stage(4).steps = cfg.stage(4).steps / 4;
    System ssys(scfg);
    load_checkpoint(stage3_ckpt, ssys.store);
    Trainer st(ssys.cfg, ssys.store, *ssys.model, *ssys.factory);
    st.run_stage(4, nullptr);
    auto r = eval_editing(ssys.sampler(), ssys.vocab, *ssys.vq, scfg.sampler,
                          cfg.eval.n_edit / 2, eseed, Lang::EN,
                          scfg.edit.cfg_for_edit ? scfg.sampler.gamma : 1.0);
    bool complete = std::isfinite(r.compliance) && std::isfinite(r.consistency) &&
                    std::isfinite(r.keep_consistency) && r.n > 0;
    sweep_complete = sweep_complete && complete;
    sweep_rows.push_back(fmt("rho %.2f: compliance %.2f consistency %.2f", rho, r.compliance,
                             r.consistency));
  }
  std::ofstream sweeplog((dir / "sweep.txt").string());
  for (const auto& row : sweep_rows) sweeplog << row << "\n";

  bool c10 = ed.keep_consistency >= 0.95 && ed.compliance_by_kind.count("recolor") &&
             ed.compliance_by_kind.at("recolor") >= 0.70 && sweep_complete;
  report(10, "editing quality (identity >= 0.95, recolor >= 0.70, 3-point sweep)", c10,
         fmt("identity %.3f, recolor %.2f, consistency %.3f; %s | %s | %s", ed.keep_consistency,
             ed.compliance_by_kind.count("recolor") ? ed.compliance_by_kind.at("recolor") : -1.0,
             ed.consistency, sweep_rows[0].c_str(), sweep_rows[1].c_str(),
             sweep_rows[2].c_str()));

  std::printf("      [recipe] toy-GenEval (pseudo-language)\n");
  std::fflush(stdout);
  auto genxx = eval_generation(sampler, sys.vocab, cfg.sampler, cfg.eval.n_generation, eseed,
                               Lang::XX);
  double bigap = std::abs(genxx.overall - gen3.overall);
  bool c11 = bigap <= 0.10;
  report(11, "bilingual mechanism (XX within 10 points of EN)", c11,
         fmt("EN overall %.2f, XX overall %.2f, gap %.3f", gen3.overall, genxx.overall, bigap));
}

// --- criterion 12: reproducibility ---------------------------------------

std::string checkpoint_bytes(System& sys) {
  namespace fs = std::filesystem;
  auto p = (fs::temp_directory_path() / "uni_acc_repro.ckpt").string();
  save_checkpoint(p, sys.store, sys.make_meta({"repro"}));
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_12() {
  RunConfig cfg = small_config();
  cfg.stage(1).steps = 50;
  cfg.stage(1).batch = 4;

  std::string bytes[2], png[2];
  for (int run = 0; run < 2; ++run) {
    System sys(cfg);
    Trainer trainer(sys.cfg, sys.store, *sys.model, *sys.factory);
    trainer.run_stage(1, nullptr);
    bytes[run] = checkpoint_bytes(sys);
    SamplerConfig opt = cfg.sampler;
    opt.seed = 99;
    auto out = sys.sampler().generate(sys.factory->encode_prompt({"a", "circle"}, Lang::EN), opt);
    auto data = encode_png(out.image);
    png[run].assign(data.begin(), data.end());
  }
  bool ok = !bytes[0].empty() && bytes[0] == bytes[1] && !png[0].empty() && png[0] == png[1];
  report(12, "reproducibility (bit-identical checkpoints and PNGs)", ok,
         fmt("checkpoint %zu bytes %s, png %zu bytes %s", bytes[0].size(),
             bytes[0] == bytes[1] ? "identical" : "DIFFER", png[0].size(),
             png[0] == png[1] ? "identical" : "DIFFER"));
}

}  // namespace

int main() {
  g_t0 = std::chrono::steady_clock::now();
  std::printf("acceptance gate: 12 criteria\n");
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criteria_8_to_11();
  criterion_12();
  std::printf("%d/12 criteria passed in %.0fs\n", 12 - g_failures, elapsed());
  return g_failures;
}
