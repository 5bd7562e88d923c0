#include "uni/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "uni/rng.hpp"

namespace uni {

using nlohmann::json;

RunConfig::RunConfig() {
  // Stage schedule follows the reference recipe at toy scale: stage 1 aligns
  // the generation adaptor/head only; later stages unfreeze everything except
  // the frozen tokenizers.
  StageConfig s1;
  s1.id = 1;
  s1.lr = 1e-4;
  s1.warmup = 10;
  s1.steps = 300;
  s1.batch = 16;
  s1.ratio = {0, 1, 0};
  s1.freeze = {"backbone", "text_head", "edit_adaptor", "edit_head",
               "semantic_encoder", "vq_tokenizer"};
  s1.image_policy = "square8";

  StageConfig s2;
  s2.id = 2;
  s2.lr = 1e-4;
  s2.warmup = 20;
  s2.steps = 600;
  s2.batch = 16;
  s2.ratio = {1, 4, 0};
  s2.freeze = {"semantic_encoder", "vq_tokenizer"};
  s2.image_policy = "square8";

  StageConfig s3;
  s3.id = 3;
  s3.lr = 4e-5;
  s3.lr2 = 1e-5;
  s3.warmup = 10;
  s3.steps = 200;
  s3.steps2 = 200;
  s3.batch = 16;
  s3.ratio = {1, 2, 0};
  s3.freeze = {"semantic_encoder", "vq_tokenizer"};
  s3.image_policy = "square12_then_buckets";

  StageConfig s4;
  s4.id = 4;
  s4.lr = 1e-5;
  s4.warmup = 10;
  s4.steps = 400;
  s4.batch = 12;
  s4.ratio = {1, 1, 1};
  s4.freeze = {"semantic_encoder", "vq_tokenizer"};
  s4.image_policy = "buckets";

  stages = {s1, s2, s3, s4};
}

const StageConfig& RunConfig::stage(int id) const {
  for (const auto& s : stages)
    if (s.id == id) return s;
  throw std::out_of_range("no stage " + std::to_string(id));
}
StageConfig& RunConfig::stage(int id) {
  for (auto& s : stages)
    if (s.id == id) return s;
  throw std::out_of_range("no stage " + std::to_string(id));
}

namespace {

json stage_to_json(const StageConfig& s) {
  json j;
  j["id"] = s.id;
  j["lr"] = s.lr;
  j["lr2"] = s.lr2;
  j["warmup"] = s.warmup;
  j["steps"] = s.steps;
  j["steps2"] = s.steps2;
  j["batch"] = s.batch;
  j["ratio"] = s.ratio;
  j["freeze"] = std::vector<std::string>(s.freeze.begin(), s.freeze.end());
  j["image_policy"] = s.image_policy;
  return j;
}

json to_json_tree(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  j["log_every"] = c.log_every;
  j["backbone"] = {{"layers", c.backbone.layers},
                   {"width", c.backbone.width},
                   {"heads", c.backbone.heads},
                   {"ff_mult", c.backbone.ff_mult},
                   {"max_positions", c.backbone.max_positions},
                   {"share_heads", c.backbone.share_heads}};
  j["vq"] = {{"downsample", c.vq.downsample},
             {"codebook_size", c.vq.codebook_size},
             {"code_dim", c.vq.code_dim},
             {"hidden", c.vq.hidden},
             {"commitment_beta", c.vq.commitment_beta},
             {"ema_decay", c.vq.ema_decay},
             {"dead_code_threshold", c.vq.dead_code_threshold},
             {"lr", c.vq.lr},
             {"steps", c.vq_train.steps},
             {"batch", c.vq_train.batch}};
  j["semantic"] = {{"patch", c.semantic.patch},
                   {"hidden", c.semantic.hidden},
                   {"lr", c.semantic.lr},
                   {"steps", c.encoder_train.steps},
                   {"batch", c.encoder_train.batch},
                   {"image_px", c.encoder_train.image_px}};
  j["data"] = {{"heights", c.data.heights},
               {"widths", c.data.widths},
               {"buckets", c.data.buckets},
               {"cond_dropout", c.data.cond_dropout}};
  j["edit"] = {{"mask_ratio", c.edit.mask_ratio},
               {"low_level_first", c.edit.low_level_first},
               {"cfg_for_edit", c.edit.cfg_for_edit}};
  j["sampler"] = {{"gamma", c.sampler.gamma},
                  {"temperature", c.sampler.temperature},
                  {"top_k", c.sampler.top_k},
                  {"seed", c.sampler.seed},
                  {"grid_h", c.sampler.grid_h},
                  {"grid_w", c.sampler.grid_w},
                  {"constrained", c.sampler.constrained},
                  {"answer_cap", c.sampler.answer_cap}};
  j["eval"] = {{"n_generation", c.eval.n_generation},
               {"n_edit", c.eval.n_edit},
               {"n_understanding", c.eval.n_understanding},
               {"n_tokenizer", c.eval.n_tokenizer}};
  json st = json::array();
  for (const auto& s : c.stages) st.push_back(stage_to_json(s));
  j["stages"] = st;
  return j;
}

void reject_unknown(const json& given, const json& allowed, const std::string& path) {
  if (!given.is_object()) return;
  for (auto it = given.begin(); it != given.end(); ++it) {
    std::string key = path.empty() ? it.key() : path + "." + it.key();
    if (!allowed.contains(it.key()))
      throw std::invalid_argument("config: unknown key '" + key + "'");
    if (it.value().is_object()) reject_unknown(it.value(), allowed.at(it.key()), key);
  }
}

void merge_into(json& base, const json& over) {
  if (!over.is_object()) {
    base = over;
    return;
  }
  for (auto it = over.begin(); it != over.end(); ++it) {
    if (base.contains(it.key()) && base[it.key()].is_object() && it.value().is_object())
      merge_into(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

StageConfig stage_from_json(const json& j) {
  StageConfig s;
  static const json kKeys = stage_to_json(s);
  reject_unknown(j, kKeys, "stages[]");
  s.id = j.value("id", s.id);
  s.lr = j.value("lr", s.lr);
  s.lr2 = j.value("lr2", s.lr2);
  s.warmup = j.value("warmup", s.warmup);
  s.steps = j.value("steps", s.steps);
  s.steps2 = j.value("steps2", s.steps2);
  s.batch = j.value("batch", s.batch);
  if (j.contains("ratio")) {
    auto r = j.at("ratio").get<std::vector<double>>();
    if (r.size() != 3) throw std::invalid_argument("config: stage ratio needs 3 entries");
    s.ratio = {r[0], r[1], r[2]};
  }
  if (j.contains("freeze")) {
    s.freeze.clear();
    for (const auto& g : j.at("freeze")) s.freeze.insert(g.get<std::string>());
  }
  s.image_policy = j.value("image_policy", s.image_policy);
  return s;
}

RunConfig from_tree(const json& j) {
  RunConfig c;
  json defaults = to_json_tree(c);
  reject_unknown(j, defaults, "");
  json merged = defaults;
  // Stage list is replaced wholesale if present, with per-stage defaults.
  json stage_override;
  if (j.contains("stages")) stage_override = j.at("stages");
  json rest = j;
  rest.erase("stages");
  merge_into(merged, rest);

  c.seed = merged.at("seed").get<uint64_t>();
  c.log_every = merged.at("log_every").get<int>();
  const json& b = merged.at("backbone");
  c.backbone.layers = b.at("layers");
  c.backbone.width = b.at("width");
  c.backbone.heads = b.at("heads");
  c.backbone.ff_mult = b.at("ff_mult");
  c.backbone.max_positions = b.at("max_positions");
  c.backbone.share_heads = b.at("share_heads");
  const json& v = merged.at("vq");
  c.vq.downsample = v.at("downsample");
  c.vq.codebook_size = v.at("codebook_size");
  c.vq.code_dim = v.at("code_dim");
  c.vq.hidden = v.at("hidden");
  c.vq.commitment_beta = v.at("commitment_beta");
  c.vq.ema_decay = v.at("ema_decay");
  c.vq.dead_code_threshold = v.at("dead_code_threshold");
  c.vq.lr = v.at("lr");
  c.vq_train.steps = v.at("steps");
  c.vq_train.batch = v.at("batch");
  const json& s = merged.at("semantic");
  c.semantic.patch = s.at("patch");
  c.semantic.hidden = s.at("hidden");
  c.semantic.lr = s.at("lr");
  c.encoder_train.steps = s.at("steps");
  c.encoder_train.batch = s.at("batch");
  c.encoder_train.image_px = s.at("image_px");
  const json& d = merged.at("data");
  c.data.heights = d.at("heights").get<std::vector<int>>();
  c.data.widths = d.at("widths").get<std::vector<int>>();
  c.data.buckets = d.at("buckets").get<std::vector<std::array<int, 2>>>();
  c.data.cond_dropout = d.at("cond_dropout");
  const json& e = merged.at("edit");
  c.edit.mask_ratio = e.at("mask_ratio");
  c.edit.low_level_first = e.at("low_level_first");
  c.edit.cfg_for_edit = e.at("cfg_for_edit");
  const json& sp = merged.at("sampler");
  c.sampler.gamma = sp.at("gamma");
  c.sampler.temperature = sp.at("temperature");
  c.sampler.top_k = sp.at("top_k");
  c.sampler.seed = sp.at("seed").get<uint64_t>();
  c.sampler.grid_h = sp.at("grid_h");
  c.sampler.grid_w = sp.at("grid_w");
  c.sampler.constrained = sp.at("constrained");
  c.sampler.answer_cap = sp.at("answer_cap");
  const json& ev = merged.at("eval");
  c.eval.n_generation = ev.at("n_generation");
  c.eval.n_edit = ev.at("n_edit");
  c.eval.n_understanding = ev.at("n_understanding");
  c.eval.n_tokenizer = ev.at("n_tokenizer");

  if (!stage_override.is_null()) {
    std::vector<StageConfig> parsed;
    for (const auto& sj : stage_override) {
      StageConfig def;
      int id = sj.value("id", 0);
      for (const auto& existing : c.stages)
        if (existing.id == id) def = existing;
      StageConfig got = stage_from_json(sj);
      // Fields absent from the JSON keep the matching default stage's values.
      json filled = stage_to_json(def);
      merge_into(filled, sj);
      got = stage_from_json(filled);
      parsed.push_back(got);
    }
    c.stages = parsed;
  }

  c.backbone.validate();
  c.vq.validate();
  c.sampler.validate();
  if (c.edit.mask_ratio < 0 || c.edit.mask_ratio >= 1)
    throw std::invalid_argument("config: edit.mask_ratio must be in [0,1)");
  for (const auto& st : c.stages) {
    if (st.batch <= 0 || st.steps < 0 || st.steps2 < 0)
      throw std::invalid_argument("config: stage " + std::to_string(st.id) + " sizes invalid");
    if (st.ratio[0] < 0 || st.ratio[1] < 0 || st.ratio[2] < 0 ||
        st.ratio[0] + st.ratio[1] + st.ratio[2] <= 0)
      throw std::invalid_argument("config: stage " + std::to_string(st.id) + " ratio invalid");
  }
  return c;
}

}  // namespace

std::string RunConfig::canonical_json() const { return to_json_tree(*this).dump(2); }

uint64_t RunConfig::hash() const { return fnv1a(canonical_json()); }

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  return from_tree(j);
}

RunConfig RunConfig::from_json_with_overrides(const std::string& text,
                                              const std::vector<std::string>& overrides) {
  json j = json::parse(text.empty() ? "{}" : text);
  for (const auto& ov : overrides) {
    auto eq = ov.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("override must be key.path=value: " + ov);
    std::string path = ov.substr(0, eq);
    std::string valtext = ov.substr(eq + 1);
    json val;
    try {
      val = json::parse(valtext);
    } catch (const json::parse_error&) {
      val = valtext;  // bare strings allowed
    }
    json* cur = &j;
    size_t start = 0;
    while (true) {
      size_t dot = path.find('.', start);
      std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
      if (dot == std::string::npos) {
        (*cur)[key] = val;
        break;
      }
      cur = &(*cur)[key];
      start = dot + 1;
    }
  }
  return from_tree(j);
}

RunConfig RunConfig::load(const std::string& path, const std::vector<std::string>& overrides) {
  std::string text = "{}";
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  return from_json_with_overrides(text, overrides);
}

}  // namespace uni
