#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "uni/ops.hpp"
#include "uni/rng.hpp"
#include "uni/tensor.hpp"

namespace uni {

template <class R>
struct Param {
  std::string name;
  std::string group;  // freeze-set unit: backbone, text_head, gen_adaptor, ...
  Shape shape;
  std::shared_ptr<std::vector<R>> val;
  std::vector<R> m, v;  // AdamW moments
};

// Per-step view of the store: leaf tensors aliasing parameter storage, with
// requires_grad decided by the active freeze set.
template <class R>
using Bindings = std::map<std::string, Tensor<R>>;

template <class R>
class ParamStore {
 public:
  size_t add(const std::string& name, const std::string& group, Shape shape,
             std::vector<R> init) {
    if (index_.count(name)) throw std::invalid_argument("param already registered: " + name);
    Param<R> p;
    p.name = name;
    p.group = group;
    p.shape = std::move(shape);
    if (numel(p.shape) != init.size()) throw std::invalid_argument("param init size mismatch: " + name);
    p.val = std::make_shared<std::vector<R>>(std::move(init));
    p.m.assign(p.val->size(), R(0));
    p.v.assign(p.val->size(), R(0));
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  size_t add_normal(const std::string& name, const std::string& group, Shape shape, Rng& rng,
                    double stddev) {
    std::vector<R> init(numel(shape));
    for (auto& x : init) x = static_cast<R>(rng.normal(0.0, stddev));
    return add(name, group, std::move(shape), std::move(init));
  }

  size_t add_const(const std::string& name, const std::string& group, Shape shape, R value) {
    return add(name, group, std::move(shape), std::vector<R>(numel(shape), value));
  }

  Param<R>& at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown param: " + name);
    return params_[it->second];
  }
  const Param<R>& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  std::vector<Param<R>>& params() { return params_; }
  const std::vector<Param<R>>& params() const { return params_; }

  Bindings<R> bind(const std::set<std::string>& frozen_groups) const {
    Bindings<R> b;
    for (const auto& p : params_)
      b.emplace(p.name, Tensor<R>::leaf_shared(p.shape, p.val, !frozen_groups.count(p.group)));
    return b;
  }

  std::set<std::string> group_names() const {
    std::set<std::string> g;
    for (const auto& p : params_) g.insert(p.group);
    return g;
  }

  // Checksum of one group's raw parameter bytes; used by freeze-contract tests.
  uint64_t group_checksum(const std::string& group) const {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& p : params_) {
      if (p.group != group) continue;
      h = fnv1a(p.name, h);
      h = fnv1a(p.val->data(), p.val->size() * sizeof(R), h);
    }
    return h;
  }

  int64_t& step_count() { return step_count_; }
  int64_t step_count() const { return step_count_; }

 private:
  std::vector<Param<R>> params_;
  std::map<std::string, size_t> index_;
  int64_t step_count_ = 0;
};

template <class R>
struct Linear {
  std::string w, b;
  Linear() = default;
  Linear(ParamStore<R>& store, const std::string& prefix, const std::string& group, int in,
         int out, Rng& rng, double stddev = 0.02)
      : w(prefix + ".w"), b(prefix + ".b") {
    store.add_normal(w, group, {in, out}, rng, stddev);
    store.add_const(b, group, {out}, R(0));
  }
  Tensor<R> operator()(Tape<R>& t, const Bindings<R>& p, const Tensor<R>& x) const {
    return add_bias(t, matmul(t, x, p.at(w)), p.at(b));
  }
};

template <class R>
struct LayerNormParams {
  std::string g, b;
  LayerNormParams() = default;
  LayerNormParams(ParamStore<R>& store, const std::string& prefix, const std::string& group, int d)
      : g(prefix + ".g"), b(prefix + ".b") {
    store.add_const(g, group, {d}, R(1));
    store.add_const(b, group, {d}, R(0));
  }
  Tensor<R> operator()(Tape<R>& t, const Bindings<R>& p, const Tensor<R>& x) const {
    return layer_norm(t, x, p.at(g), p.at(b));
  }
};

// Two affine layers with a nonlinearity between — the adaptor shape used
// throughout (generation adaptor, edit adaptor, heads are plain Linear).
template <class R>
struct Mlp2 {
  Linear<R> fc1, fc2;
  Mlp2() = default;
  Mlp2(ParamStore<R>& store, const std::string& prefix, const std::string& group, int in, int hidden,
       int out, Rng& rng)
      : fc1(store, prefix + ".fc1", group, in, hidden, rng),
        fc2(store, prefix + ".fc2", group, hidden, out, rng) {}
  Tensor<R> operator()(Tape<R>& t, const Bindings<R>& p, const Tensor<R>& x) const {
    return fc2(t, p, gelu(t, fc1(t, p, x)));
  }
};

}  // namespace uni
