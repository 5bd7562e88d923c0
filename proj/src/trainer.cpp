#include "uni/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>

#include "uni/optimizer.hpp"

namespace uni {

double lr_at(const StageConfig& stage, int step) {
  if (step >= stage.steps && stage.steps2 > 0) return stage.lr2;
  double base = stage.lr;
  if (stage.warmup > 0 && step < stage.warmup)
    return base * static_cast<double>(step + 1) / stage.warmup;
  return base;
}

std::array<int, 3> mix_batch(const std::array<double, 3>& ratio, int batch) {
  double total = ratio[0] + ratio[1] + ratio[2];
  if (total <= 0) throw std::invalid_argument("mix_batch: ratio sums to zero");
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int k = 0; k < 3; ++k) {
    double exact = batch * ratio[k] / total;
    counts[k] = static_cast<int>(std::floor(exact));
    rem[k] = exact - counts[k];
    assigned += counts[k];
  }
  while (assigned < batch) {
    int best = -1;
    for (int k = 0; k < 3; ++k) {
      if (ratio[k] <= 0) continue;  // never give samples to an excluded task
      if (best < 0 || rem[k] > rem[best]) best = k;  // ties keep earlier task
    }
    ++counts[best];
    rem[best] = -1;
    ++assigned;
  }
  return counts;
}

void Trainer::write_csv_header(std::ostream& out) {
  out << "step,stage,lr,loss_total,loss_und,loss_gen,loss_edit,grad_norm,tokens_per_sec\n";
}

StageResult Trainer::run_stage(int stage_id, std::ostream* metrics) {
  const StageConfig& stage = cfg_.stage(stage_id);
  uint64_t stage_seed = derive_seed(cfg_.seed, "stage", static_cast<uint64_t>(stage_id));
  StageResult result;
  AdamWConfig opt;
  std::vector<double> tail_losses;
  int total = stage.total_steps();
  for (int step = 0; step < total; ++step) {
    auto t0 = std::chrono::steady_clock::now();
    double lr = lr_at(stage, step);
    auto counts = mix_batch(stage.ratio, stage.batch);
    std::vector<TokenStream> batch;
    size_t tokens = 0;
    int sample_idx = 0;
    for (int k = 0; k < 3; ++k) {
      for (int j = 0; j < counts[k]; ++j, ++sample_idx) {
        Rng rng(derive_seed(stage_seed, "sample",
                            static_cast<uint64_t>(step) * 4096 + sample_idx));
        auto bucket = pick_bucket(rng, cfg_.data, stage.image_policy, step, stage.steps);
        TokenStream s;
        switch (k) {
          case 0: s = factory_->understanding(rng, bucket[0], bucket[1], Split::Train); break;
          case 1: s = factory_->generation(rng, bucket[0], bucket[1], Split::Train); break;
          default:
            s = factory_->editing(rng, bucket[0], bucket[1], Split::Train,
                                  cfg_.edit.mask_ratio);
        }
        tokens += s.slots.size();
        batch.push_back(std::move(s));
      }
    }

    Tape<float> tape;
    auto bound = store_->bind(stage.freeze);
    auto breakdown = model_->joint_loss(tape, bound, batch);
    double loss_total = static_cast<double>(breakdown.total.item());
    tape.backward(breakdown.total);
    auto grads = collect_grads(*store_, bound);
    double gnorm = clip_global_norm(grads, opt.grad_clip);
    if (!adamw_step(*store_, grads, lr, opt)) ++result.skipped_steps;

    tail_losses.push_back(loss_total);
    if (tail_losses.size() > 10) tail_losses.erase(tail_losses.begin());
    ++result.steps_run;

    if (metrics && (step % cfg_.log_every == 0 || step == total - 1)) {
      auto dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      char buf[256];
      std::snprintf(buf, sizeof buf, "%d,%d,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.1f\n", step,
                    stage_id, lr, loss_total, breakdown.und, breakdown.gen, breakdown.edit,
                    gnorm, tokens / std::max(dt, 1e-9));
      *metrics << buf;
      metrics->flush();
    }
  }
  result.final_loss =
      std::accumulate(tail_losses.begin(), tail_losses.end(), 0.0) /
      std::max<size_t>(tail_losses.size(), 1);
  return result;
}

}  // namespace uni
