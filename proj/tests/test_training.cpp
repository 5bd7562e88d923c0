#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "uni/trainer.hpp"

using namespace uni;
using unitest::TinySystem;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.seed = 77;
  for (auto& s : cfg.stages) {
    s.steps = 4;
    s.steps2 = s.steps2 > 0 ? 2 : 0;
    s.batch = 3;
    s.warmup = 2;
  }
  cfg.log_every = 1;
  return cfg;
}

}  // namespace

TEST_CASE("learning-rate schedule") {
  StageConfig s;
  s.lr = 1e-4;
  s.warmup = 4;
  s.steps = 10;
  SUBCASE("linear warmup then constant") {
    CHECK(lr_at(s, 0) == doctest::Approx(0.25e-4));
    CHECK(lr_at(s, 1) == doctest::Approx(0.5e-4));
    CHECK(lr_at(s, 3) == doctest::Approx(1e-4));
    CHECK(lr_at(s, 9) == doctest::Approx(1e-4));
  }
  SUBCASE("second sub-phase switches to lr2") {
    s.lr2 = 1e-5;
    s.steps2 = 5;
    CHECK(lr_at(s, 9) == doctest::Approx(1e-4));
    CHECK(lr_at(s, 10) == doctest::Approx(1e-5));
    CHECK(lr_at(s, 14) == doctest::Approx(1e-5));
  }
  SUBCASE("no warmup") {
    s.warmup = 0;
    CHECK(lr_at(s, 0) == doctest::Approx(1e-4));
  }
}

TEST_CASE("batch mixing by largest remainder") {
  CHECK(mix_batch({0, 1, 0}, 16) == std::array<int, 3>{0, 16, 0});
  CHECK(mix_batch({1, 4, 0}, 16) == std::array<int, 3>{3, 13, 0});
  CHECK(mix_batch({1, 2, 0}, 16) == std::array<int, 3>{5, 11, 0});
  CHECK(mix_batch({1, 1, 1}, 12) == std::array<int, 3>{4, 4, 4});
  SUBCASE("ties break understanding > generation > editing") {
    CHECK(mix_batch({1, 1, 0}, 3) == std::array<int, 3>{2, 1, 0});
    CHECK(mix_batch({1, 1, 1}, 4) == std::array<int, 3>{2, 1, 1});
  }
  SUBCASE("zero-ratio tasks never receive samples") {
    for (int b = 1; b <= 16; ++b) {
      auto c = mix_batch({0, 3, 1}, b);
      CHECK(c[0] == 0);
      CHECK(c[0] + c[1] + c[2] == b);
    }
  }
  SUBCASE("all-zero ratio rejected") {
    CHECK_THROWS(mix_batch({0, 0, 0}, 8));
  }
}

TEST_CASE("stage 1 trains only the generation adaptor and head") {
  TinySystem sys(3);
  RunConfig cfg = tiny_config();
  Trainer trainer(cfg, sys.store, *sys.model, *sys.factory);
  std::map<std::string, uint64_t> before;
  for (const auto& g : sys.store.group_names()) before[g] = sys.store.group_checksum(g);
  std::ostringstream csv;
  auto result = trainer.run_stage(1, &csv);
  CHECK(result.steps_run == 4);
  for (const auto& g : sys.store.group_names()) {
    bool should_move = g == "gen_adaptor" || g == "gen_head";
    CHECK((sys.store.group_checksum(g) != before[g]) == should_move);
  }
}

TEST_CASE("stage 4 touches every group except the frozen tokenizers") {
  TinySystem sys(5);
  RunConfig cfg = tiny_config();
  Trainer trainer(cfg, sys.store, *sys.model, *sys.factory);
  std::map<std::string, uint64_t> before;
  for (const auto& g : sys.store.group_names()) before[g] = sys.store.group_checksum(g);
  auto result = trainer.run_stage(4, nullptr);
  CHECK(result.steps_run == 4);
  for (const auto& g : sys.store.group_names()) {
    bool frozen = g == "semantic_encoder" || g == "vq_tokenizer";
    CHECK((sys.store.group_checksum(g) == before[g]) == frozen);
  }
}

TEST_CASE("stage 4 batches mix all three tasks and losses are finite") {
  TinySystem sys(7);
  RunConfig cfg = tiny_config();
  Trainer trainer(cfg, sys.store, *sys.model, *sys.factory);
  std::ostringstream csv;
  Trainer::write_csv_header(csv);
  auto result = trainer.run_stage(4, &csv);
  CHECK(result.skipped_steps == 0);
  std::istringstream in(csv.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,stage,lr,loss_total,loss_und,loss_gen,loss_edit,grad_norm,tokens_per_sec");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    std::istringstream row(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(row, field, ',')) vals.push_back(std::stod(field));
    REQUIRE(vals.size() == 9);
    for (int k : {3, 4, 5, 6}) {   // all three task losses present and finite
      CHECK(std::isfinite(vals[static_cast<size_t>(k)]));
      CHECK(vals[static_cast<size_t>(k)] > 0);
    }
  }
  CHECK(rows == 4);
}

TEST_CASE("metrics are bit-identical across reruns, timing column aside") {
  auto run = [] {
    TinySystem sys(9);
    RunConfig cfg = tiny_config();
    Trainer trainer(cfg, sys.store, *sys.model, *sys.factory);
    std::ostringstream csv;
    trainer.run_stage(2, &csv);
    // strip the trailing tokens_per_sec column from every row
    std::istringstream in(csv.str());
    std::string line, kept;
    while (std::getline(in, line)) kept += line.substr(0, line.rfind(',')) + "\n";
    return std::make_pair(kept, sys.store.group_checksum("backbone"));
  };
  auto a = run();
  auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("stage 3 runs its two sub-phases with multi-resolution buckets") {
  TinySystem sys(11);
  RunConfig cfg = tiny_config();
  Trainer trainer(cfg, sys.store, *sys.model, *sys.factory);
  std::ostringstream csv;
  auto result = trainer.run_stage(3, &csv);
  CHECK(result.steps_run == 6);  // 4 + 2
  // the logged lr switches to lr2 in the second sub-phase
  std::istringstream in(csv.str());
  std::string line;
  std::vector<double> lrs;
  while (std::getline(in, line)) {
    auto p1 = line.find(','), p2 = line.find(',', p1 + 1), p3 = line.find(',', p2 + 1);
    lrs.push_back(std::stod(line.substr(p2 + 1, p3 - p2 - 1)));
  }
  REQUIRE(lrs.size() == 6);
  CHECK(lrs[3] == doctest::Approx(cfg.stage(3).lr));
  CHECK(lrs[4] == doctest::Approx(cfg.stage(3).lr2));
  CHECK(lrs[5] == doctest::Approx(cfg.stage(3).lr2));
}

TEST_CASE("proxy pretraining moves only the semantic encoder in the main store") {
  TinySystem sys(13);
  Rng head_rng(99);
  SemanticEncoder<float>::ProxyHeads heads(sys.sem_cfg.embed_dim, head_rng);
  std::map<std::string, uint64_t> before;
  for (const auto& g : sys.store.group_names()) before[g] = sys.store.group_checksum(g);
  Rng rng(15);
  std::vector<SceneSpec> batch;
  for (int i = 0; i < 4; ++i) {
    SceneSpec s = sample_scene(rng, 32, 32, Split::Train);
    s.objects.resize(1);
    batch.push_back(s);
  }
  auto stats = sys.sem->pretrain_proxy_step(heads, batch);
  CHECK(std::isfinite(stats.loss));
  for (const auto& g : sys.store.group_names()) {
    bool moved = sys.store.group_checksum(g) != before[g];
    CHECK(moved == (g == "semantic_encoder"));
  }
}

TEST_CASE("proxy pretraining drives the loss down and solves the local sub-tasks") {
  // Full pooled-probe convergence needs thousands of steps and is exercised by
  // the reference recipe; here we check the training signal is real: total
  // loss falls sharply and the near-separable sub-tasks (background color,
  // per-patch color) reach low cross-entropy.
  TinySystem sys(17);
  Rng hrng(31);
  SemanticEncoder<float>::ProxyHeads heads(sys.sem_cfg.embed_dim, hrng);
  Rng rng(33);
  ProxyStats first, stats;
  for (int step = 0; step < 1200; ++step) {
    std::vector<SceneSpec> batch;
    for (int i = 0; i < 8; ++i) {
      SceneSpec s = sample_scene(rng, 48, 48, Split::Train);
      s.objects.resize(1);
      batch.push_back(s);
    }
    stats = sys.sem->pretrain_proxy_step(heads, batch);
    if (step == 0) first = stats;
  }
  double local_first = first.loss_bg + first.loss_patch_shape + first.loss_patch_color;
  double local_last = stats.loss_bg + stats.loss_patch_shape + stats.loss_patch_color;
  CHECK(stats.loss < first.loss);
  CHECK(local_last < 0.25 * local_first);
  CHECK(stats.loss_bg < 0.1);                // ln 8 ≈ 2.08 at init
  CHECK(stats.loss_patch_color < 0.7);       // ditto
  CHECK(stats.loss_patch_shape < 0.6);       // ln 4 ≈ 1.39 at init
}
