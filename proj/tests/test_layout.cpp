#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "uni/layout.hpp"
#include "uni/vocab.hpp"

using namespace uni;

namespace {

UnifiedVocab make_vocab() { return UnifiedVocab({8, 12, 16}, {8, 12, 16}, 256); }

std::vector<int> random_grid(Rng& rng, int h, int w, int k) {
  std::vector<int> g(static_cast<size_t>(h) * w);
  for (auto& v : g) v = static_cast<int>(rng.next_below(static_cast<uint64_t>(k)));
  return g;
}

std::vector<std::vector<float>> feat_rows(int n, int d) {
  std::vector<std::vector<float>> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)].assign(static_cast<size_t>(d), 0.1f * i);
  return out;
}

}  // namespace

TEST_CASE("mask plan") {
  SUBCASE("count is round(ratio * n)") {
    CHECK(make_mask_plan(1, 64, 0.6).masked.size() == 38);   // round(38.4)
    CHECK(make_mask_plan(1, 64, 0.75).masked.size() == 48);
    CHECK(make_mask_plan(1, 10, 0.55).masked.size() == 6);   // round(5.5) rounds up
    CHECK(make_mask_plan(1, 64, 0.0).masked.empty());
  }
  SUBCASE("pure function of (seed, n, ratio)") {
    auto a = make_mask_plan(42, 100, 0.6);
    auto b = make_mask_plan(42, 100, 0.6);
    CHECK(a.masked == b.masked);
    auto c = make_mask_plan(43, 100, 0.6);
    CHECK(a.masked != c.masked);
  }
  SUBCASE("sorted, unique, in range") {
    auto plan = make_mask_plan(7, 50, 0.6);
    std::set<int> uniq(plan.masked.begin(), plan.masked.end());
    CHECK(uniq.size() == plan.masked.size());
    CHECK(std::is_sorted(plan.masked.begin(), plan.masked.end()));
    CHECK(*uniq.begin() >= 0);
    CHECK(*uniq.rbegin() < 50);
  }
  SUBCASE("ratio outside [0,1) rejected") {
    CHECK_THROWS_AS(make_mask_plan(1, 10, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(make_mask_plan(1, 10, -0.1), std::invalid_argument);
  }
}

TEST_CASE("generation sequence layout") {
  auto vocab = make_vocab();
  Rng rng(3);
  int h = 8, w = 12;
  std::vector<int> prompt = {0, 1, 2};
  auto grid = random_grid(rng, h, w, vocab.k_codes());
  auto s = build_generation_sequence(vocab, prompt, grid, h, w);

  SUBCASE("length is |prompt| + h*w + h + 5") {
    CHECK(s.slots.size() == prompt.size() + static_cast<size_t>(h) * w + h + 5);
  }
  SUBCASE("structure tokens in order") {
    CHECK(s.slots[0].id == vocab.bos());
    CHECK(s.slots[1].id == prompt[0]);
    size_t p = prompt.size();
    CHECK(s.slots[p + 1].id == vocab.h_token(h));
    CHECK(s.slots[p + 2].id == vocab.w_token(w));
    CHECK(s.slots[p + 3].id == vocab.boi());
    CHECK(s.slots.back().id == vocab.eoi());
    // every row ends with <eol>, including the last
    size_t boi_at = p + 3;
    for (int r = 0; r < h; ++r)
      CHECK(s.slots[boi_at + static_cast<size_t>(r + 1) * (w + 1)].id == vocab.eol());
  }
  SUBCASE("loss support runs from the <boi> successor through <eoi>") {
    size_t boi_at = prompt.size() + 3;
    int on = 0;
    for (size_t i = 0; i < s.slots.size(); ++i) {
      CHECK(s.slots[i].loss == (i > boi_at));
      on += s.slots[i].loss;
    }
    CHECK(static_cast<size_t>(on) == emission_length(h, w));
  }
  SUBCASE("all slots use 1-D positions equal to their index") {
    for (size_t i = 0; i < s.slots.size(); ++i) {
      CHECK_FALSE(s.slots[i].pos2d);
      CHECK(s.slots[i].p1 == static_cast<int>(i));
    }
  }
  SUBCASE("prefix is the sequence up to and including <boi>") {
    auto pre = build_generation_prefix(vocab, prompt, h, w);
    CHECK(pre.slots.size() == prompt.size() + 4);
    for (size_t i = 0; i < pre.slots.size(); ++i) CHECK(pre.slots[i].id == s.slots[i].id);
  }
  SUBCASE("unsupported grid names the supported sizes") {
    CHECK_THROWS_WITH_AS(build_generation_sequence(vocab, prompt, grid, 9, 12),
                         doctest::Contains("supported heights"), std::invalid_argument);
  }
}

TEST_CASE("raster round trip and malformed rasters") {
  auto vocab = make_vocab();
  Rng rng(11);
  int h = 12, w = 8;
  auto grid = random_grid(rng, h, w, vocab.k_codes());
  auto s = build_generation_sequence(vocab, {}, grid, h, w);
  std::vector<int> emitted;
  for (const auto& slot : s.slots)
    if (slot.loss) emitted.push_back(slot.id);
  CHECK(emitted.size() == emission_length(h, w));

  SUBCASE("emitted ids parse back to the grid") {
    CHECK(parse_generated_grid(vocab, emitted, h, w) == grid);
  }
  SUBCASE("short row reports the offset") {
    auto bad = emitted;
    bad.erase(bad.begin() + 3);  // drop a code from row 0
    try {
      parse_generated_grid(vocab, bad, h, w);
      FAIL("expected MalformedRaster");
    } catch (const MalformedRaster& e) {
      CHECK(e.offset == 7);  // the early <eol>
    }
  }
  SUBCASE("missing <eol> detected") {
    auto bad = emitted;
    bad.erase(bad.begin() + w);  // remove row 0's <eol>
    CHECK_THROWS_AS(parse_generated_grid(vocab, bad, h, w), MalformedRaster);
  }
  SUBCASE("missing <eoi> detected at end of input") {
    auto bad = emitted;
    bad.pop_back();
    try {
      parse_generated_grid(vocab, bad, h, w);
      FAIL("expected MalformedRaster");
    } catch (const MalformedRaster& e) {
      CHECK(e.offset == bad.size());
    }
  }
  SUBCASE("text token inside the raster detected") {
    auto bad = emitted;
    bad[0] = vocab.bos();
    CHECK_THROWS_AS(parse_generated_grid(vocab, bad, h, w), MalformedRaster);
  }
}

TEST_CASE("understanding sequence layout") {
  auto vocab = make_vocab();
  int sh = 4, sw = 4;
  auto sem = feat_rows(sh * sw, 16);
  std::vector<int> q = {5, 6, 7}, a = {9};
  auto s = build_understanding_sequence(vocab, sem, sh, sw, q, a);

  CHECK(s.task == Task::Understand);
  CHECK(s.slots.size() == 1 + static_cast<size_t>(sh) * sw + q.size() + a.size() + 1);
  CHECK(s.slots[0].id == vocab.bos());
  CHECK(s.slots.back().id == vocab.eos());

  SUBCASE("semantic slots carry 2-D positions") {
    for (int r = 0; r < sh; ++r)
      for (int c = 0; c < sw; ++c) {
        const Slot& slot = s.slots[1 + static_cast<size_t>(r) * sw + c];
        CHECK(slot.kind == Slot::Kind::Semantic);
        CHECK(slot.pos2d);
        CHECK(slot.p1 == r);
        CHECK(slot.p2 == c);
      }
  }
  SUBCASE("loss only on answer tokens and <eos>") {
    size_t ans_at = 1 + static_cast<size_t>(sh) * sw + q.size();
    for (size_t i = 0; i < s.slots.size(); ++i) CHECK(s.slots[i].loss == (i >= ans_at));
  }
  SUBCASE("prefix matches the sequence up to the answer") {
    auto pre = build_understanding_prefix(vocab, sem, sh, sw, q);
    CHECK(pre.slots.size() == s.slots.size() - a.size() - 1);
    for (size_t i = 0; i < pre.slots.size(); ++i) {
      CHECK(pre.slots[i].kind == s.slots[i].kind);
      CHECK(pre.slots[i].id == s.slots[i].id);
      CHECK(pre.slots[i].p1 == s.slots[i].p1);
    }
  }
}

TEST_CASE("editing sequence layout") {
  auto vocab = make_vocab();
  Rng rng(21);
  int h = 8, w = 8;
  auto low = feat_rows(h * w, 32);
  int sh = 4, sw = 4;
  auto sem = feat_rows(sh * sw, 16);
  std::vector<int> instr = {10, 11};
  auto grid = random_grid(rng, h, w, vocab.k_codes());
  auto plan = make_mask_plan(5, h * w, 0.6);
  auto s = build_editing_sequence(vocab, low, sem, sh, sw, instr, grid, h, w, plan);

  CHECK(s.task == Task::Edit);

  SUBCASE("default ordering: low-level, then semantic, then instruction, then target") {
    size_t i = 1;
    for (int k = 0; k < h * w; ++k, ++i) CHECK(s.slots[i].kind == Slot::Kind::LowLevel);
    for (int k = 0; k < sh * sw; ++k, ++i) CHECK(s.slots[i].kind == Slot::Kind::Semantic);
    CHECK(s.slots[i].id == instr[0]);
    CHECK(s.slots[i + instr.size()].id == vocab.h_token(h));
  }
  SUBCASE("flipped ordering places semantic first") {
    auto f = build_editing_sequence(vocab, low, sem, sh, sw, instr, grid, h, w, plan, false);
    CHECK(f.slots[1].kind == Slot::Kind::Semantic);
    CHECK(f.slots[1 + static_cast<size_t>(sh) * sw].kind == Slot::Kind::LowLevel);
  }
  SUBCASE("plan-selected low-level slots are masked") {
    int masked = 0;
    for (int k = 0; k < h * w; ++k) {
      const Slot& slot = s.slots[static_cast<size_t>(1 + k)];
      bool in_plan = std::binary_search(plan.masked.begin(), plan.masked.end(), k);
      CHECK(slot.masked == in_plan);
      masked += slot.masked;
    }
    CHECK(masked == static_cast<int>(plan.masked.size()));
  }
  SUBCASE("loss only on the target segment") {
    int on = 0;
    for (const auto& slot : s.slots) on += slot.loss;
    CHECK(static_cast<size_t>(on) == emission_length(h, w));
    CHECK_FALSE(s.slots[1].loss);
    CHECK(s.slots.back().loss);
    CHECK(s.slots.back().id == vocab.eoi());
  }
  SUBCASE("1-D positions equal slot index, semantic stays 2-D") {
    for (size_t i = 0; i < s.slots.size(); ++i) {
      if (s.slots[i].pos2d) {
        CHECK(s.slots[i].kind == Slot::Kind::Semantic);
      } else {
        CHECK(s.slots[i].p1 == static_cast<int>(i));
      }
    }
  }
  SUBCASE("prefix agrees with the sequence up to <boi>, without masking") {
    auto pre = build_editing_prefix(vocab, low, sem, sh, sw, instr, h, w);
    CHECK(pre.slots.size() == s.slots.size() - emission_length(h, w));
    for (const auto& slot : pre.slots) CHECK_FALSE(slot.masked);
    CHECK(pre.slots.back().id == vocab.boi());
  }
}
