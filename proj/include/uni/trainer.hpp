#pragma once

#include <array>
#include <iosfwd>
#include <string>

#include "uni/config.hpp"
#include "uni/data.hpp"
#include "uni/model.hpp"

namespace uni {

// Warmup ramp, then constant; stage 3's second sub-phase switches to lr2.
double lr_at(const StageConfig& stage, int step);

// Largest-remainder split of `batch` across the stage ratio; ties break
// understanding > generation > editing. Zero-ratio tasks get zero samples.
std::array<int, 3> mix_batch(const std::array<double, 3>& ratio, int batch);

struct StageResult {
  double final_loss = 0;   // mean total loss over the last 10 logged steps
  int steps_run = 0;
  int skipped_steps = 0;   // non-finite gradients
};

class Trainer {
 public:
  Trainer(const RunConfig& cfg, ParamStore<float>& store, Model<float>& model,
          const SampleFactory& factory)
      : cfg_(cfg), store_(&store), model_(&model), factory_(&factory) {}

  static void write_csv_header(std::ostream& out);

  // Runs one stage; appends one CSV row per log_every steps (and the final
  // step). The timing column is the only non-deterministic output.
  StageResult run_stage(int stage_id, std::ostream* metrics);

 private:
  RunConfig cfg_;
  ParamStore<float>* store_;
  Model<float>* model_;
  const SampleFactory* factory_;
};

}  // namespace uni
