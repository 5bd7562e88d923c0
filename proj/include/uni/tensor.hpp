#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace uni {

using Shape = std::vector<int>;

inline size_t numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// One node of the computation graph. Values are shared so that several
// graph nodes (e.g. per-shard leaves) can alias the same storage while
// keeping gradients node-local.
template <class R>
struct TensorNode {
  Shape shape;
  std::shared_ptr<std::vector<R>> val;
  std::vector<R> grad;        // allocated lazily by backward
  bool requires_grad = false;
  std::function<void()> back; // empty for leaves

  size_t size() const { return numel(shape); }
  void ensure_grad() {
    if (grad.size() != size()) grad.assign(size(), R(0));
  }
};

// Value-semantics handle over a graph node.
template <class R>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode<R>> n) : node_(std::move(n)) {}

  static Tensor leaf(Shape shape, std::vector<R> data, bool requires_grad) {
    if (numel(shape) != data.size())
      throw std::invalid_argument("tensor: shape " + shape_str(shape) +
                                  " does not match data length " + std::to_string(data.size()));
    auto n = std::make_shared<TensorNode<R>>();
    n->shape = std::move(shape);
    n->val = std::make_shared<std::vector<R>>(std::move(data));
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  // Leaf aliasing external storage (parameters owned by a ParamStore).
  static Tensor leaf_shared(Shape shape, std::shared_ptr<std::vector<R>> data, bool requires_grad) {
    if (numel(shape) != data->size()) throw std::invalid_argument("tensor: shape/data mismatch");
    auto n = std::make_shared<TensorNode<R>>();
    n->shape = std::move(shape);
    n->val = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(n);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    std::vector<R> d(numel(shape), R(0));
    return leaf(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(R v) { return leaf({1}, {v}, false); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  size_t size() const { return node_->size(); }
  std::vector<R>& data() { return *node_->val; }
  const std::vector<R>& data() const { return *node_->val; }
  std::vector<R>& grad() { node_->ensure_grad(); return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  R item() const {
    if (size() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return (*node_->val)[0];
  }
  std::shared_ptr<TensorNode<R>> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode<R>> node_;
};

// Records ops in execution order; creation order is a topological order by
// construction, so backward is a single reverse sweep.
template <class R>
class Tape {
 public:
  std::shared_ptr<TensorNode<R>> emit(Shape shape, bool requires_grad) {
    auto n = std::make_shared<TensorNode<R>>();
    n->shape = std::move(shape);
    n->val = std::make_shared<std::vector<R>>(n->size(), R(0));
    n->requires_grad = requires_grad;
    nodes_.push_back(n);
    return n;
  }

  // Seeds d(loss)/d(loss)=1 and sweeps the tape once in reverse.
  void backward(const Tensor<R>& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    loss.node()->ensure_grad();
    loss.node()->grad[0] = R(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      // nodes with an empty grad received no upstream gradient (e.g. blocked
      // by stop_grad); their contribution is identically zero
      if ((*it)->back && (*it)->requires_grad && !(*it)->grad.empty()) (*it)->back();
    }
  }

  size_t size() const { return nodes_.size(); }

  // Backward closures capture shared_ptrs to their own nodes; drop them so
  // the graph is actually freed.
  void clear() {
    for (auto& n : nodes_) n->back = nullptr;
    nodes_.clear();
  }

  ~Tape() { clear(); }

 private:
  std::vector<std::shared_ptr<TensorNode<R>>> nodes_;
};

}  // namespace uni
