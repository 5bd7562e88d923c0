// Command-line entry point for the whole lifecycle: tokenizer/encoder
// pretraining, staged training, generation, editing, answering, evaluation,
// and the mask-ratio ablation sweep.
//
// Exit codes: 0 success, 2 configuration error, 3 missing prerequisite,
// 4 runtime fault.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "uni/evaluate.hpp"
#include "uni/system.hpp"
#include "uni/trainer.hpp"

using namespace uni;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitPrereq = 3;
constexpr int kExitRuntime = 4;

struct CliError {
  int code;
  std::string message;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string root = ".";
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "JSON config file (defaults when omitted)");
  cmd->add_option("--set", c.overrides, "Override, dotted.key=value (repeatable)");
  cmd->add_option("--root", c.root, "Data/checkpoint root directory")
      ->envname("UNI_ROOT");
  cmd->add_flag("--force", c.force, "Allow overwriting existing outputs");
}

RunConfig resolve_config(const Common& c) {
  try {
    RunConfig cfg = c.config_path.empty()
                        ? RunConfig::from_json_with_overrides("{}", c.overrides)
                        : RunConfig::load(c.config_path, c.overrides);
    std::cerr << "config hash: " << cfg.hash() << "\n";
    return cfg;
  } catch (const std::exception& e) {
    throw CliError{kExitConfig, e.what()};
  }
}

std::string ckpt_path(const Common& c, const std::string& name) {
  return (fs::path(c.root) / (name + ".ckpt")).string();
}

void require_fresh(const std::string& path, bool force) {
  if (!force && fs::exists(path))
    throw CliError{kExitConfig, path + " exists; pass --force to overwrite"};
}

CheckpointMeta load_prereq(System& sys, const std::string& path, const std::string& stage) {
  if (!fs::exists(path))
    throw CliError{kExitPrereq, "missing prerequisite checkpoint: " + path};
  CheckpointMeta meta;
  try {
    meta = load_checkpoint(path, sys.store);
  } catch (const std::exception& e) {
    throw CliError{kExitPrereq, std::string("cannot load ") + path + ": " + e.what()};
  }
  if (!stage.empty() && !meta.has_stage(stage))
    throw CliError{kExitPrereq, path + " lacks required lineage entry '" + stage + "'"};
  if (meta.config_hash != sys.cfg.hash())
    std::cerr << "note: checkpoint config hash " << meta.config_hash
              << " differs from resolved hash " << sys.cfg.hash() << "\n";
  return meta;
}

void save_with_lineage(System& sys, const std::string& path, CheckpointMeta meta,
                       const std::string& add) {
  if (!meta.has_stage(add)) meta.lineage.push_back(add);
  meta.config_hash = sys.cfg.hash();
  meta.vocab = sys.vocab.table();
  meta.step_count = static_cast<uint64_t>(sys.store.step_count());
  save_checkpoint(path, sys.store, meta);
  std::cerr << "wrote " << path << "\n";
}

Lang parse_lang(const std::string& s) {
  if (s == "en") return Lang::EN;
  if (s == "xx") return Lang::XX;
  throw CliError{kExitConfig, "unknown language '" + s + "' (en|xx)"};
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream ss(text);
  std::vector<std::string> words;
  for (std::string w; ss >> w;) words.push_back(w);
  return words;
}

std::vector<int> encode_or_die(const System& sys, const std::string& text, Lang lang) {
  try {
    return sys.factory->encode_prompt(split_words(text), lang);
  } catch (const std::exception& e) {
    throw CliError{kExitConfig, std::string("cannot encode prompt: ") + e.what()};
  }
}

Image load_input_image(const std::string& path) {
  if (!fs::exists(path)) throw CliError{kExitPrereq, "missing input image: " + path};
  try {
    return load_ppm(path);
  } catch (const std::exception& e) {
    throw CliError{kExitConfig, path + ": " + e.what() + " (PPM input expected)"};
  }
}

json edit_report_json(const EditEvalReport& r) {
  json by_kind(r.compliance_by_kind);
  return {{"compliance", r.compliance},
          {"consistency", r.consistency},
          {"keep_consistency", r.keep_consistency},
          {"by_kind", by_kind},
          {"n", r.n}};
}

// --- command bodies -------------------------------------------------------

int cmd_tokenizer_train(const Common& c) {
  System sys(resolve_config(c));
  auto out = ckpt_path(c, "tokenizer");
  require_fresh(out, c.force);
  auto stats = sys.pretrain_tokenizer(&std::cerr);
  std::cout << "tokenizer: recon " << stats.recon_loss << " usage " << stats.usage_fraction
            << (stats.collapsed ? " (collapsed)" : "") << "\n";
  save_with_lineage(sys, out, sys.make_meta({}), "tokenizer");
  return 0;
}

int cmd_encoder_train(const Common& c) {
  System sys(resolve_config(c));
  auto out = ckpt_path(c, "encoder");
  require_fresh(out, c.force);
  auto meta = load_prereq(sys, ckpt_path(c, "tokenizer"), "tokenizer");
  auto stats = sys.pretrain_encoder(&std::cerr);
  std::cout << "encoder: proxy loss " << stats.loss << " shape-acc " << stats.accuracy << "\n";
  save_with_lineage(sys, out, meta, "encoder");
  return 0;
}

int cmd_train(const Common& c, int stage) {
  System sys(resolve_config(c));
  if (stage < 1 || stage > 4) throw CliError{kExitConfig, "--stage must be 1..4"};
  auto out = ckpt_path(c, "stage" + std::to_string(stage));
  require_fresh(out, c.force);
  std::string prev = stage == 1 ? "encoder" : "stage" + std::to_string(stage - 1);
  auto meta = load_prereq(sys, ckpt_path(c, prev), prev);
  auto metrics_path = (fs::path(c.root) / ("stage" + std::to_string(stage) + "_metrics.csv")).string();
  std::ofstream metrics(metrics_path);
  Trainer::write_csv_header(metrics);
  Trainer trainer(sys.cfg, sys.store, *sys.model, *sys.factory);
  auto result = trainer.run_stage(stage, &metrics);
  std::cout << "stage " << stage << ": final loss " << result.final_loss << " over "
            << result.steps_run << " steps (" << result.skipped_steps << " skipped)\n";
  std::cerr << "metrics: " << metrics_path << "\n";
  save_with_lineage(sys, out, meta, "stage" + std::to_string(stage));
  return 0;
}

struct SampleFlags {
  int grid_h = 8, grid_w = 8, top_k = 0;
  double gamma = -1, temperature = 1.0;  // gamma < 0: keep the config value
  uint64_t seed = 0;
};

SamplerConfig resolved_opt(const System& sys, const SampleFlags& f) {
  SamplerConfig opt = sys.cfg.sampler;
  opt.grid_h = f.grid_h;
  opt.grid_w = f.grid_w;
  opt.top_k = f.top_k;
  opt.temperature = f.temperature;
  opt.seed = f.seed;
  if (f.gamma >= 0) opt.gamma = f.gamma;
  try {
    opt.validate();
  } catch (const std::exception& e) {
    throw CliError{kExitConfig, e.what()};
  }
  return opt;
}

int cmd_generate(const Common& c, const std::string& ckpt, const std::string& prompt,
                 const std::string& lang_s, const std::string& out, const SampleFlags& flags) {
  System sys(resolve_config(c));
  require_fresh(out, c.force);
  load_prereq(sys, ckpt.empty() ? ckpt_path(c, "stage4") : ckpt, "");
  SamplerConfig opt = resolved_opt(sys, flags);
  auto ids = encode_or_die(sys, prompt, parse_lang(lang_s));
  auto result = sys.sampler().generate(ids, opt);
  if (result.malformed) throw CliError{kExitRuntime, "malformed raster: " + result.error};
  save_image(result.image, out);
  std::cout << "wrote " << out << " (" << result.image.h << "x" << result.image.w << ")\n";
  return 0;
}

int cmd_edit(const Common& c, const std::string& ckpt, const std::string& image_path,
             const std::string& instruction, const std::string& lang_s, const std::string& out,
             const SampleFlags& flags) {
  System sys(resolve_config(c));
  require_fresh(out, c.force);
  load_prereq(sys, ckpt.empty() ? ckpt_path(c, "stage4") : ckpt, "");
  Image source = load_input_image(image_path);
  SampleFlags f = flags;
  double gamma = f.gamma >= 0 ? f.gamma : 1.0;  // editing defaults to no CFG
  f.gamma = -1;
  SamplerConfig opt = resolved_opt(sys, f);
  auto ids = encode_or_die(sys, instruction, parse_lang(lang_s));
  auto result = sys.sampler().edit(source, ids, opt, sys.cfg.edit.low_level_first, gamma);
  if (result.malformed) throw CliError{kExitRuntime, "malformed raster: " + result.error};
  save_image(result.image, out);
  std::cout << "wrote " << out << " (" << result.image.h << "x" << result.image.w << ")\n";
  return 0;
}

int cmd_answer(const Common& c, const std::string& ckpt, const std::string& image_path,
               const std::string& question, const std::string& lang_s) {
  System sys(resolve_config(c));
  load_prereq(sys, ckpt.empty() ? ckpt_path(c, "stage4") : ckpt, "");
  SamplerConfig opt = sys.cfg.sampler;
  Image img = load_input_image(image_path);
  auto ids = encode_or_die(sys, question, parse_lang(lang_s));
  auto words = sys.sampler().answer(img, ids, opt);
  std::string sep;
  for (const auto& w : words) {
    std::cout << sep << w;
    sep = " ";
  }
  std::cout << "\n";
  return 0;
}

int cmd_eval(const Common& c, const std::string& ckpt, const std::string& suite,
             const std::string& lang_s, uint64_t seed) {
  System sys(resolve_config(c));
  load_prereq(sys, ckpt.empty() ? ckpt_path(c, "stage4") : ckpt, "");
  Lang lang = parse_lang(lang_s);
  auto sampler = sys.sampler();
  const auto& ev = sys.cfg.eval;
  json summary;
  auto jsonl_out = [&](const char* name) {
    return std::ofstream((fs::path(c.root) / (std::string("eval_") + name + ".jsonl")).string());
  };
  if (suite == "all" || suite == "tokenizer") {
    auto r = eval_tokenizer(*sys.vq, ev.n_tokenizer, derive_seed(seed, "eval-tok", 0), 32, 32);
    summary["tokenizer"] = {{"psnr", r.psnr}, {"baseline_psnr", r.baseline_psnr},
                            {"usage", r.usage}, {"n", r.n}};
  }
  if (suite == "all" || suite == "generation") {
    auto log = jsonl_out("generation");
    auto r = eval_generation(sampler, sys.vocab, sys.cfg.sampler, ev.n_generation, seed, lang, &log);
    json cats(r.category);
    summary["generation"] = {{"overall", r.overall}, {"category", cats},
                             {"n_per_category", r.n_per_category}};
  }
  if (suite == "all" || suite == "editing") {
    auto log = jsonl_out("editing");
    auto r = eval_editing(sampler, sys.vocab, *sys.vq, sys.cfg.sampler, ev.n_edit, seed, lang,
                          sys.cfg.edit.cfg_for_edit ? sys.cfg.sampler.gamma : 1.0, &log);
    summary["editing"] = edit_report_json(r);
  }
  if (suite == "all" || suite == "understanding") {
    auto log = jsonl_out("understanding");
    auto r = eval_understanding(sampler, sys.vocab, sys.cfg.sampler, ev.n_understanding, seed, lang, &log);
    summary["understanding"] = {{"accuracy", r.accuracy}, {"n", r.n}};
  }
  if (summary.empty())
    throw CliError{kExitConfig,
                   "unknown suite '" + suite + "' (all|tokenizer|generation|editing|understanding)"};
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_sweep(const Common& c, const std::vector<double>& ratios, uint64_t seed) {
  if (ratios.empty()) throw CliError{kExitConfig, "--mask-ratio needs at least one value"};
  auto report_path = (fs::path(c.root) / "sweep_report.jsonl").string();
  require_fresh(report_path, c.force);
  std::ofstream report(report_path);
  for (double rho : ratios) {
    if (rho < 0 || rho >= 1) throw CliError{kExitConfig, "mask ratio must be in [0,1)"};
    Common cc = c;
    cc.overrides.push_back("edit.mask_ratio=" + std::to_string(rho));
    System sys(resolve_config(cc));
    auto meta = load_prereq(sys, ckpt_path(c, "stage3"), "stage3");
    Trainer trainer(sys.cfg, sys.store, *sys.model, *sys.factory);
    auto result = trainer.run_stage(4, nullptr);
    auto r = eval_editing(sys.sampler(), sys.vocab, *sys.vq, sys.cfg.sampler, sys.cfg.eval.n_edit,
                          seed, Lang::EN,
                          sys.cfg.edit.cfg_for_edit ? sys.cfg.sampler.gamma : 1.0);
    json row = edit_report_json(r);
    row["mask_ratio"] = rho;
    row["stage4_final_loss"] = result.final_loss;
    report << row.dump() << "\n";
    std::cout << row.dump() << "\n";
    (void)meta;
  }
  std::cerr << "report: " << report_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified autoregressive multimodal model: understand, generate, edit"};
  app.require_subcommand(1);

  Common common;
  std::string ckpt, prompt, instruction, question, image_path, out, lang = "en", suite = "all";
  int stage = 0, grid_h = 8, grid_w = 8, top_k = 0;
  double gamma = -1, temperature = 1.0;
  uint64_t seed = 0;
  std::vector<double> ratios;

  auto* tok = app.add_subcommand("tokenizer-train", "Pretrain the VQ tokenizer (stage 0a)");
  add_common(tok, common);

  auto* enc = app.add_subcommand("encoder-train", "Pretrain the semantic encoder (stage 0b)");
  add_common(enc, common);

  auto* tr = app.add_subcommand("train", "Run one training stage");
  add_common(tr, common);
  tr->add_option("--stage", stage, "Stage number 1..4")->required();

  auto* gen = app.add_subcommand("generate", "Text-to-image generation");
  gen->set_help_flag("--help", "Print help");  // frees -h for the grid height
  add_common(gen, common);
  gen->add_option("--ckpt", ckpt, "Checkpoint (default <root>/stage4.ckpt)");
  gen->add_option("--prompt", prompt, "Space-separated prompt words")->required();
  gen->add_option("--lang", lang, "Prompt language: en|xx");
  gen->add_option("-h,--h", grid_h, "Grid height in code cells");
  gen->add_option("-w,--w", grid_w, "Grid width in code cells");
  gen->add_option("--gamma", gamma, "CFG scale (config default when omitted)");
  gen->add_option("--seed", seed, "Sampling seed");
  gen->add_option("--temperature", temperature, "Sampling temperature");
  gen->add_option("--top-k", top_k, "Top-k truncation (0 = off)");
  gen->add_option("--out", out, "Output image (.png or .ppm)")->required();

  auto* ed = app.add_subcommand("edit", "Instruction-based image editing");
  add_common(ed, common);
  ed->add_option("--ckpt", ckpt, "Checkpoint (default <root>/stage4.ckpt)");
  ed->add_option("--image", image_path, "Source image (PPM)")->required();
  ed->add_option("--instruction", instruction, "Edit instruction words")->required();
  ed->add_option("--lang", lang, "Instruction language: en|xx");
  ed->add_option("--gamma", gamma, "CFG scale for editing (default 1 = off)");
  ed->add_option("--seed", seed, "Sampling seed");
  ed->add_option("--out", out, "Output image (.png or .ppm)")->required();

  auto* ans = app.add_subcommand("answer", "Visual question answering");
  add_common(ans, common);
  ans->add_option("--ckpt", ckpt, "Checkpoint (default <root>/stage4.ckpt)");
  ans->add_option("--image", image_path, "Input image (PPM)")->required();
  ans->add_option("--question", question, "Question words")->required();
  ans->add_option("--lang", lang, "Question language: en|xx");

  auto* ev = app.add_subcommand("eval", "Evaluation suites");
  add_common(ev, common);
  ev->add_option("--ckpt", ckpt, "Checkpoint (default <root>/stage4.ckpt)");
  ev->add_option("--suite", suite, "all|tokenizer|generation|editing|understanding");
  ev->add_option("--lang", lang, "Prompt language: en|xx");
  ev->add_option("--seed", seed, "Evaluation seed");

  auto* sw = app.add_subcommand("sweep", "Mask-ratio ablation: retrain stage 4 per value");
  add_common(sw, common);
  sw->add_option("--mask-ratio", ratios, "Comma-separated ratios, e.g. 0.5,0.6,0.75")
      ->required()
      ->delimiter(',');
  sw->add_option("--seed", seed, "Evaluation seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    SampleFlags flags;
    flags.grid_h = grid_h;
    flags.grid_w = grid_w;
    flags.top_k = top_k;
    flags.gamma = gamma;
    flags.temperature = temperature;
    flags.seed = seed;
    if (tok->parsed()) return cmd_tokenizer_train(common);
    if (enc->parsed()) return cmd_encoder_train(common);
    if (tr->parsed()) return cmd_train(common, stage);
    if (gen->parsed()) return cmd_generate(common, ckpt, prompt, lang, out, flags);
    if (ed->parsed()) return cmd_edit(common, ckpt, image_path, instruction, lang, out, flags);
    if (ans->parsed()) return cmd_answer(common, ckpt, image_path, question, lang);
    if (ev->parsed()) return cmd_eval(common, ckpt, suite, lang, seed);
    if (sw->parsed()) return cmd_sweep(common, ratios, seed);
  } catch (const CliError& e) {
    std::cerr << "error: " << e.message << "\n";
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return 0;
}
