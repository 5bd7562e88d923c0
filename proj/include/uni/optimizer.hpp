#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "uni/nn.hpp"

namespace uni {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 1.0;
};

template <class R>
using GradMap = std::map<std::string, std::vector<R>>;

// Global L2 clipping in place; returns the pre-clip norm.
template <class R>
double clip_global_norm(GradMap<R>& grads, double max_norm) {
  double sq = 0;
  for (auto& [name, g] : grads)
    for (R x : g) sq += static_cast<double>(x) * static_cast<double>(x);
  double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    R s = static_cast<R>(max_norm / norm);
    for (auto& [name, g] : grads)
      for (R& x : g) x *= s;
  }
  return norm;
}

template <class R>
bool grads_finite(const GradMap<R>& grads) {
  for (auto& [name, g] : grads)
    for (R x : g)
      if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

// One AdamW step over the named parameters present in `grads`. Returns false
// (and leaves everything untouched, including the step count) on NaN/Inf
// gradients so the trainer can log and continue.
template <class R>
bool adamw_step(ParamStore<R>& store, const GradMap<R>& grads, double lr,
                const AdamWConfig& cfg = {}) {
  if (!grads_finite(grads)) return false;
  int64_t t = ++store.step_count();
  double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (auto& [name, g] : grads) {
    Param<R>& p = store.at(name);
    if (g.size() != p.val->size()) throw std::invalid_argument("adamw_step: grad shape mismatch for " + name);
    for (size_t i = 0; i < g.size(); ++i) {
      double gi = static_cast<double>(g[i]);
      double m = cfg.beta1 * static_cast<double>(p.m[i]) + (1.0 - cfg.beta1) * gi;
      double v = cfg.beta2 * static_cast<double>(p.v[i]) + (1.0 - cfg.beta2) * gi * gi;
      p.m[i] = static_cast<R>(m);
      p.v[i] = static_cast<R>(v);
      double mhat = m / bc1;
      double vhat = v / bc2;
      double x = static_cast<double>((*p.val)[i]);
      x -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * x);
      (*p.val)[i] = static_cast<R>(x);
    }
  }
  return true;
}

// Collects gradients from bound leaves, in store order, for trainable params.
template <class R>
GradMap<R> collect_grads(const ParamStore<R>& store, Bindings<R>& bound) {
  GradMap<R> out;
  for (const auto& p : store.params()) {
    Tensor<R>& ten = bound.at(p.name);
    if (!ten.requires_grad()) continue;
    out.emplace(p.name, ten.grad());
  }
  return out;
}

}  // namespace uni
