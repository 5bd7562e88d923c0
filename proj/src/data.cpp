#include "uni/data.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace uni {

namespace {

Lang pick_lang(Rng& rng) { return rng.uniform() < 0.5 ? Lang::EN : Lang::XX; }

}  // namespace

TokenStream SampleFactory::generation(Rng& rng, int grid_h, int grid_w, Split split) const {
  int f = vq_.config().downsample;
  SceneSpec spec = sample_scene(rng, grid_h * f, grid_w * f, split);
  Lang lang = pick_lang(rng);
  auto words = caption_words(spec, lang, rng);
  auto prompt = vocab_.encode_words(words);
  if (cond_dropout_ > 0 && rng.uniform() < cond_dropout_) prompt.clear();
  auto q = vq_.encode(render(spec));
  return build_generation_sequence(vocab_, prompt, q.ids, q.h, q.w);
}

TokenStream SampleFactory::understanding(Rng& rng, int grid_h, int grid_w, Split split) const {
  int f = vq_.config().downsample;
  SceneSpec spec = sample_scene(rng, grid_h * f, grid_w * f, split);
  Lang lang = pick_lang(rng);
  QaPair qa = make_qa(spec, lang, rng);
  int sh, sw;
  auto sem = sem_.embed(render(spec), sh, sw);
  return build_understanding_sequence(vocab_, sem, sh, sw, vocab_.encode_words(qa.question),
                                      vocab_.encode_words(qa.answer));
}

TokenStream SampleFactory::editing(Rng& rng, int grid_h, int grid_w, Split split,
                                   double mask_ratio) const {
  int f = vq_.config().downsample;
  Lang lang = pick_lang(rng);
  EditPair pair = make_edit_pair(rng, grid_h * f, grid_w * f, split, lang);
  Image src = render(pair.source);
  auto src_q = vq_.encode(src);
  auto tgt_q = vq_.encode(render(pair.target));
  int sh, sw;
  auto sem = sem_.embed(src, sh, sw);
  auto plan = make_mask_plan(derive_seed(rng.next_u64(), "edit-mask-plan", 0),
                             static_cast<int>(src_q.pre_quant.size()), mask_ratio);
  auto instruction = vocab_.encode_words(pair.instruction);
  if (cond_dropout_ > 0 && rng.uniform() < cond_dropout_) instruction.clear();
  return build_editing_sequence(vocab_, src_q.pre_quant, sem, sh, sw, instruction, tgt_q.ids,
                                tgt_q.h, tgt_q.w, plan, edit_.low_level_first);
}

std::vector<int> SampleFactory::encode_prompt(const std::vector<std::string>& words,
                                              Lang lang) const {
  return vocab_.encode_words(to_lang(words, lang));
}

std::array<int, 2> pick_bucket(Rng& rng, const DataConfig& data, const std::string& policy,
                               int step, int phase_a_steps) {
  if (policy == "square8") return {8, 8};
  if (policy == "square12") return {12, 12};
  if (policy == "square12_then_buckets") {
    if (step < phase_a_steps) return {12, 12};
    return data.buckets.at(rng.next_below(data.buckets.size()));
  }
  if (policy == "buckets") return data.buckets.at(rng.next_below(data.buckets.size()));
  throw std::invalid_argument("unknown image policy: " + policy);
}

void export_corpus(const std::string& dir, Split split, int count, uint64_t seed, int hpx,
                   int wpx) {
  namespace fs = std::filesystem;
  fs::path root = fs::path(dir) / (split == Split::Train ? "train" : "eval");
  fs::create_directories(root);
  std::ofstream meta(root / "metadata.jsonl");
  Rng rng(derive_seed(seed, "corpus", split == Split::Train ? 0 : 1));
  for (int i = 0; i < count; ++i) {
    SceneSpec spec = sample_scene(rng, hpx, wpx, split);
    std::string fname = "img_" + std::to_string(i) + ".png";
    save_image(render(spec), (root / fname).string());
    Rng crng(derive_seed(seed, "corpus-caption", static_cast<uint64_t>(i)));
    auto words = caption_words(spec, Lang::EN, crng);
    nlohmann::json j;
    j["file"] = fname;
    j["bg"] = kColorNames[static_cast<size_t>(spec.bg)];
    std::string cap;
    for (size_t k = 0; k < words.size(); ++k) cap += (k ? " " : "") + words[k];
    j["caption"] = cap;
    nlohmann::json objs = nlohmann::json::array();
    for (const auto& o : spec.objects)
      objs.push_back({{"shape", shape_name(o.shape)},
                      {"color", kColorNames[static_cast<size_t>(o.color)]},
                      {"cell", o.cell},
                      {"size", o.size}});
    j["objects"] = objs;
    meta << j.dump() << "\n";
  }
}

}  // namespace uni
