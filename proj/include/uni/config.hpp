#pragma once

#include <array>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "uni/model.hpp"
#include "uni/semantic.hpp"
#include "uni/vq.hpp"

namespace uni {

struct StageConfig {
  int id = 1;
  double lr = 1e-4;
  double lr2 = 0;   // second sub-phase (stage 3); 0 = single phase
  int warmup = 0;
  int steps = 100;
  int steps2 = 0;   // second sub-phase step count
  int batch = 16;
  std::array<double, 3> ratio = {0, 1, 0};  // understanding : generation : editing
  std::set<std::string> freeze;
  std::string image_policy = "square8";  // square8 | square12 | buckets
  int total_steps() const { return steps + steps2; }
};

struct DataConfig {
  std::vector<int> heights = {8, 12, 16};
  std::vector<int> widths = {8, 12, 16};
  std::vector<std::array<int, 2>> buckets = {{8, 8}, {8, 12}, {12, 8}, {12, 12}, {16, 8}, {8, 16}};
  double cond_dropout = 0.1;  // P(drop prompt/instruction) so the CFG unconditional stream is trained
};

struct EditConfig {
  double mask_ratio = 0.6;
  bool low_level_first = true;  // flip for the ordering ablation
  bool cfg_for_edit = false;
};

struct SamplerConfig {
  double gamma = 3.0;
  double temperature = 1.0;
  int top_k = 0;  // 0 = disabled (full support)
  uint64_t seed = 0;
  int grid_h = 8, grid_w = 8;
  bool constrained = true;
  int answer_cap = 8;

  void validate() const {
    if (gamma < 0) throw std::invalid_argument("sampler: gamma must be >= 0");
    if (temperature <= 0) throw std::invalid_argument("sampler: temperature must be > 0");
    if (top_k < 0) throw std::invalid_argument("sampler: top_k must be >= 1 or 0 to disable");
  }
};

struct VqTrainConfig {
  int steps = 1500;
  int batch = 8;
};
struct EncoderTrainConfig {
  int steps = 5000;
  int batch = 8;
  int image_px = 48;  // proxy render side; 48 px resolves shapes cleanly at p=8
};
struct EvalConfig {
  int n_generation = 25;   // per category
  int n_edit = 100;
  int n_understanding = 200;
  int n_tokenizer = 64;
};

struct RunConfig {
  uint64_t seed = 1234;
  BackboneConfig backbone;
  VqConfig vq;
  VqTrainConfig vq_train;
  SemanticConfig semantic;
  EncoderTrainConfig encoder_train;
  DataConfig data;
  EditConfig edit;
  SamplerConfig sampler;
  EvalConfig eval;
  std::vector<StageConfig> stages;  // stages 1..4 in order
  int log_every = 10;

  RunConfig();  // paper-derived defaults at toy scale

  const StageConfig& stage(int id) const;
  StageConfig& stage(int id);

  std::string canonical_json() const;
  uint64_t hash() const;

  // Parses JSON text over the defaults; unknown keys are rejected.
  static RunConfig from_json_text(const std::string& text);
  static RunConfig load(const std::string& path, const std::vector<std::string>& overrides = {});
  // Applies "dotted.key=value" to the JSON tree.
  static RunConfig from_json_with_overrides(const std::string& text,
                                            const std::vector<std::string>& overrides);
};

}  // namespace uni
