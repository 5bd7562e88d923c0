#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "uni/tensor.hpp"

// Primitive op set: matmul, elementwise add/mul, bias/broadcast forms,
// softmax, layer-norm, GELU, sigmoid, embedding gather, row selection /
// assembly, reshape/transpose, reductions and fused cross-entropy.
// Everything else in the project is composed from these.

namespace uni {

template <class R>
void check_same_shape(const Tensor<R>& a, const Tensor<R>& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

template <class R>
Tensor<R> add(Tape<R>& t, const Tensor<R>& a, const Tensor<R>& b) {
  check_same_shape(a, b, "add");
  auto an = a.node(), bn = b.node();
  auto out = t.emit(a.shape(), an->requires_grad || bn->requires_grad);
  const auto& av = *an->val;
  const auto& bv = *bn->val;
  auto& ov = *out->val;
  for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
  out->back = [an, bn, out] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) bn->grad[i] += out->grad[i];
    }
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> sub(Tape<R>& t, const Tensor<R>& a, const Tensor<R>& b) {
  check_same_shape(a, b, "sub");
  auto an = a.node(), bn = b.node();
  auto out = t.emit(a.shape(), an->requires_grad || bn->requires_grad);
  for (size_t i = 0; i < out->val->size(); ++i) (*out->val)[i] = (*an->val)[i] - (*bn->val)[i];
  out->back = [an, bn, out] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) bn->grad[i] -= out->grad[i];
    }
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> mul(Tape<R>& t, const Tensor<R>& a, const Tensor<R>& b) {
  check_same_shape(a, b, "mul");
  auto an = a.node(), bn = b.node();
  auto out = t.emit(a.shape(), an->requires_grad || bn->requires_grad);
  for (size_t i = 0; i < out->val->size(); ++i) (*out->val)[i] = (*an->val)[i] * (*bn->val)[i];
  out->back = [an, bn, out] {
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i] * (*bn->val)[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) bn->grad[i] += out->grad[i] * (*an->val)[i];
    }
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> scale(Tape<R>& t, const Tensor<R>& a, R c) {
  auto an = a.node();
  auto out = t.emit(a.shape(), an->requires_grad);
  for (size_t i = 0; i < out->val->size(); ++i) (*out->val)[i] = (*an->val)[i] * c;
  out->back = [an, out, c] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i] * c;
  };
  return Tensor<R>(out);
}

// x: [N x D], bias: [D], broadcast over rows.
template <class R>
Tensor<R> add_bias(Tape<R>& t, const Tensor<R>& x, const Tensor<R>& bias) {
  if (x.shape().size() != 2 || bias.size() != static_cast<size_t>(x.shape()[1]))
    throw std::invalid_argument("add_bias: expected [NxD] + [D]");
  auto xn = x.node(), bn = bias.node();
  int n = x.shape()[0], d = x.shape()[1];
  auto out = t.emit(x.shape(), xn->requires_grad || bn->requires_grad);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) (*out->val)[i * d + j] = (*xn->val)[i * d + j] + (*bn->val)[j];
  out->back = [xn, bn, out, n, d] {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (size_t i = 0; i < out->grad.size(); ++i) xn->grad[i] += out->grad[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) bn->grad[j] += out->grad[i * d + j];
    }
  };
  return Tensor<R>(out);
}

namespace detail {
// C[MxN] += A[MxK] * B[KxN], ikj order for cache friendliness.
template <class R>
void mm_acc(const R* a, const R* b, R* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const R* arow = a + static_cast<size_t>(i) * k;
    R* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      R av = arow[p];
      if (av == R(0)) continue;
      const R* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
// C[MxN] += A[MxK] * B^T where B is [NxK].
template <class R>
void mm_bt_acc(const R* a, const R* b, R* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const R* arow = a + static_cast<size_t>(i) * k;
    R* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const R* brow = b + static_cast<size_t>(j) * k;
      R acc = 0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}
// C[KxN] += A^T * B where A is [MxK], B is [MxN].
template <class R>
void mm_at_acc(const R* a, const R* b, R* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const R* arow = a + static_cast<size_t>(i) * k;
    const R* brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      R av = arow[p];
      if (av == R(0)) continue;
      R* crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}
}  // namespace detail

template <class R>
Tensor<R> matmul(Tape<R>& t, const Tensor<R>& a, const Tensor<R>& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0])
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " " +
                                shape_str(b.shape()));
  int m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  auto an = a.node(), bn = b.node();
  auto out = t.emit({m, n}, an->requires_grad || bn->requires_grad);
  detail::mm_acc(an->val->data(), bn->val->data(), out->val->data(), m, k, n);
  out->back = [an, bn, out, m, k, n] {
    if (an->requires_grad) {
      an->ensure_grad();
      detail::mm_bt_acc(out->grad.data(), bn->val->data(), an->grad.data(), m, n, k);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      detail::mm_at_acc(an->val->data(), out->grad.data(), bn->grad.data(), m, k, n);
    }
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> transpose2d(Tape<R>& t, const Tensor<R>& a) {
  if (a.shape().size() != 2) throw std::invalid_argument("transpose2d: rank != 2");
  int m = a.shape()[0], n = a.shape()[1];
  auto an = a.node();
  auto out = t.emit({n, m}, an->requires_grad);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) (*out->val)[j * m + i] = (*an->val)[i * n + j];
  out->back = [an, out, m, n] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) an->grad[i * n + j] += out->grad[j * m + i];
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> reshape(Tape<R>& t, const Tensor<R>& a, Shape shape) {
  if (numel(shape) != a.size()) throw std::invalid_argument("reshape: element count mismatch");
  auto an = a.node();
  auto out = t.emit(std::move(shape), an->requires_grad);
  *out->val = *an->val;  // row-major layout identical
  out->back = [an, out] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < out->grad.size(); ++i) an->grad[i] += out->grad[i];
  };
  return Tensor<R>(out);
}

// Columns [j0, j0+w) of a [NxD] matrix.
template <class R>
Tensor<R> slice_cols(Tape<R>& t, const Tensor<R>& a, int j0, int w) {
  int n = a.shape()[0], d = a.shape()[1];
  if (j0 < 0 || j0 + w > d) throw std::invalid_argument("slice_cols: out of range");
  auto an = a.node();
  auto out = t.emit({n, w}, an->requires_grad);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < w; ++j) (*out->val)[i * w + j] = (*an->val)[i * d + j0 + j];
  out->back = [an, out, n, d, j0, w] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < w; ++j) an->grad[i * d + j0 + j] += out->grad[i * w + j];
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> select_rows(Tape<R>& t, const Tensor<R>& a, std::vector<int> rows) {
  int d = a.shape()[1];
  int n = static_cast<int>(rows.size());
  auto an = a.node();
  auto out = t.emit({n, d}, an->requires_grad);
  for (int i = 0; i < n; ++i) {
    if (rows[i] < 0 || rows[i] >= a.shape()[0]) throw std::out_of_range("select_rows: bad index");
    std::copy_n(an->val->data() + static_cast<size_t>(rows[i]) * d, d,
                out->val->data() + static_cast<size_t>(i) * d);
  }
  out->back = [an, out, rows = std::move(rows), d] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < rows.size(); ++i)
      for (int j = 0; j < d; ++j) an->grad[static_cast<size_t>(rows[i]) * d + j] += out->grad[i * d + j];
  };
  return Tensor<R>(out);
}

// Builds a [TxD] matrix from parts; parts[p].second maps part rows to output
// rows. Every output row must be covered exactly once.
template <class R>
Tensor<R> assemble_rows(Tape<R>& t, int total_rows, int d,
                        std::vector<std::pair<Tensor<R>, std::vector<int>>> parts) {
  bool rg = false;
  for (auto& [ten, rows] : parts) {
    if (ten.shape().size() != 2 || ten.shape()[1] != d ||
        ten.shape()[0] != static_cast<int>(rows.size()))
      throw std::invalid_argument("assemble_rows: part shape mismatch");
    rg = rg || ten.requires_grad();
  }
  std::vector<char> covered(total_rows, 0);
  auto out = t.emit({total_rows, d}, rg);
  for (auto& [ten, rows] : parts) {
    for (size_t i = 0; i < rows.size(); ++i) {
      int r = rows[i];
      if (r < 0 || r >= total_rows || covered[r]) throw std::invalid_argument("assemble_rows: bad row map");
      covered[r] = 1;
      std::copy_n(ten.data().data() + i * d, d, out->val->data() + static_cast<size_t>(r) * d);
    }
  }
  for (char c : covered)
    if (!c) throw std::invalid_argument("assemble_rows: uncovered row");
  std::vector<std::pair<std::shared_ptr<TensorNode<R>>, std::vector<int>>> srcs;
  for (auto& [ten, rows] : parts) srcs.emplace_back(ten.node(), std::move(rows));
  out->back = [srcs = std::move(srcs), out, d] {
    for (auto& [n, rows] : srcs) {
      if (!n->requires_grad) continue;
      n->ensure_grad();
      for (size_t i = 0; i < rows.size(); ++i)
        for (int j = 0; j < d; ++j)
          n->grad[i * d + j] += out->grad[static_cast<size_t>(rows[i]) * d + j];
    }
  };
  return Tensor<R>(out);
}

// Horizontal concatenation of [Nxd_i] blocks.
template <class R>
Tensor<R> concat_cols(Tape<R>& t, const std::vector<Tensor<R>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  int n = parts[0].shape()[0];
  int d = 0;
  bool rg = false;
  for (const auto& p : parts) {
    if (p.shape().size() != 2 || p.shape()[0] != n)
      throw std::invalid_argument("concat_cols: row count mismatch");
    d += p.shape()[1];
    rg = rg || p.requires_grad();
  }
  auto out = t.emit({n, d}, rg);
  std::vector<std::shared_ptr<TensorNode<R>>> srcs;
  int off = 0;
  for (const auto& p : parts) {
    int w = p.shape()[1];
    for (int i = 0; i < n; ++i)
      std::copy_n(p.data().data() + static_cast<size_t>(i) * w, w,
                  out->val->data() + static_cast<size_t>(i) * d + off);
    off += w;
    srcs.push_back(p.node());
  }
  out->back = [srcs = std::move(srcs), out, n, d] {
    int off2 = 0;
    for (auto& s : srcs) {
      int w = s->shape[1];
      if (s->requires_grad) {
        s->ensure_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < w; ++j)
            s->grad[static_cast<size_t>(i) * w + j] += out->grad[static_cast<size_t>(i) * d + off2 + j];
      }
      off2 += w;
    }
  };
  return Tensor<R>(out);
}

// Repeats a [1xD] (or [D]) row n times.
template <class R>
Tensor<R> repeat_row(Tape<R>& t, const Tensor<R>& a, int n) {
  int d = static_cast<int>(a.size());
  auto an = a.node();
  auto out = t.emit({n, d}, an->requires_grad);
  for (int i = 0; i < n; ++i) std::copy_n(an->val->data(), d, out->val->data() + static_cast<size_t>(i) * d);
  out->back = [an, out, n, d] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) an->grad[j] += out->grad[static_cast<size_t>(i) * d + j];
  };
  return Tensor<R>(out);
}

// Embedding lookup: table [VxD], ids -> [len(ids) x D].
template <class R>
Tensor<R> gather_rows(Tape<R>& t, const Tensor<R>& table, std::vector<int> ids) {
  int v = table.shape()[0], d = table.shape()[1];
  auto tn = table.node();
  auto out = t.emit({static_cast<int>(ids.size()), d}, tn->requires_grad);
  for (size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= v) throw std::out_of_range("gather_rows: id out of range");
    std::copy_n(tn->val->data() + static_cast<size_t>(ids[i]) * d, d, out->val->data() + i * d);
  }
  out->back = [tn, out, ids = std::move(ids), d] {
    if (!tn->requires_grad) return;
    tn->ensure_grad();
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < d; ++j) tn->grad[static_cast<size_t>(ids[i]) * d + j] += out->grad[i * d + j];
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> softmax_rows(Tape<R>& t, const Tensor<R>& a) {
  int n = a.shape()[0], d = a.shape()[1];
  auto an = a.node();
  auto out = t.emit(a.shape(), an->requires_grad);
  for (int i = 0; i < n; ++i) {
    const R* x = an->val->data() + static_cast<size_t>(i) * d;
    R* y = out->val->data() + static_cast<size_t>(i) * d;
    R mx = x[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, x[j]);
    R s = 0;
    for (int j = 0; j < d; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (int j = 0; j < d; ++j) y[j] /= s;
  }
  out->back = [an, out, n, d] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < n; ++i) {
      const R* y = out->val->data() + static_cast<size_t>(i) * d;
      const R* dy = out->grad.data() + static_cast<size_t>(i) * d;
      R* dx = an->grad.data() + static_cast<size_t>(i) * d;
      R dot = 0;
      for (int j = 0; j < d; ++j) dot += y[j] * dy[j];
      for (int j = 0; j < d; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  };
  return Tensor<R>(out);
}

// Softmax over scores [TxT] restricted to j <= i (causal attention weights).
template <class R>
Tensor<R> causal_softmax(Tape<R>& t, const Tensor<R>& scores) {
  int n = scores.shape()[0];
  if (scores.shape()[1] != n) throw std::invalid_argument("causal_softmax: not square");
  auto an = scores.node();
  auto out = t.emit(scores.shape(), an->requires_grad);
  for (int i = 0; i < n; ++i) {
    const R* x = an->val->data() + static_cast<size_t>(i) * n;
    R* y = out->val->data() + static_cast<size_t>(i) * n;
    R mx = x[0];
    for (int j = 1; j <= i; ++j) mx = std::max(mx, x[j]);
    R s = 0;
    for (int j = 0; j <= i; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (int j = 0; j <= i; ++j) y[j] /= s;
    // entries j > i stay exactly zero
  }
  out->back = [an, out, n] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < n; ++i) {
      const R* y = out->val->data() + static_cast<size_t>(i) * n;
      const R* dy = out->grad.data() + static_cast<size_t>(i) * n;
      R* dx = an->grad.data() + static_cast<size_t>(i) * n;
      R dot = 0;
      for (int j = 0; j <= i; ++j) dot += y[j] * dy[j];
      for (int j = 0; j <= i; ++j) dx[j] += y[j] * (dy[j] - dot);
    }
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> layer_norm(Tape<R>& t, const Tensor<R>& x, const Tensor<R>& gamma, const Tensor<R>& beta,
                     R eps = R(1e-5)) {
  int n = x.shape()[0], d = x.shape()[1];
  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  auto out = t.emit(x.shape(), xn->requires_grad || gn->requires_grad || bn->requires_grad);
  auto stats = std::make_shared<std::vector<R>>(static_cast<size_t>(n) * 2);  // mean, inv std per row
  for (int i = 0; i < n; ++i) {
    const R* xi = xn->val->data() + static_cast<size_t>(i) * d;
    R mu = 0;
    for (int j = 0; j < d; ++j) mu += xi[j];
    mu /= d;
    R var = 0;
    for (int j = 0; j < d; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= d;
    R inv = R(1) / std::sqrt(var + eps);
    (*stats)[i * 2] = mu;
    (*stats)[i * 2 + 1] = inv;
    R* yi = out->val->data() + static_cast<size_t>(i) * d;
    for (int j = 0; j < d; ++j) yi[j] = (xi[j] - mu) * inv * (*gn->val)[j] + (*bn->val)[j];
  }
  out->back = [xn, gn, bn, out, stats, n, d] {
    for (int i = 0; i < n; ++i) {
      const R* xi = xn->val->data() + static_cast<size_t>(i) * d;
      const R* dy = out->grad.data() + static_cast<size_t>(i) * d;
      R mu = (*stats)[i * 2], inv = (*stats)[i * 2 + 1];
      if (gn->requires_grad) {
        gn->ensure_grad();
        for (int j = 0; j < d; ++j) gn->grad[j] += dy[j] * (xi[j] - mu) * inv;
      }
      if (bn->requires_grad) {
        bn->ensure_grad();
        for (int j = 0; j < d; ++j) bn->grad[j] += dy[j];
      }
      if (xn->requires_grad) {
        xn->ensure_grad();
        R* dx = xn->grad.data() + static_cast<size_t>(i) * d;
        R m1 = 0, m2 = 0;
        for (int j = 0; j < d; ++j) {
          R xc = (xi[j] - mu) * inv;
          R dxh = dy[j] * (*gn->val)[j];
          m1 += dxh;
          m2 += dxh * xc;
        }
        m1 /= d;
        m2 /= d;
        for (int j = 0; j < d; ++j) {
          R xc = (xi[j] - mu) * inv;
          R dxh = dy[j] * (*gn->val)[j];
          dx[j] += inv * (dxh - m1 - xc * m2);
        }
      }
    }
  };
  return Tensor<R>(out);
}

// tanh-approximation GELU.
template <class R>
Tensor<R> gelu(Tape<R>& t, const Tensor<R>& a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  auto an = a.node();
  auto out = t.emit(a.shape(), an->requires_grad);
  for (size_t i = 0; i < out->val->size(); ++i) {
    R x = (*an->val)[i];
    R u = R(kC) * (x + R(kA) * x * x * x);
    (*out->val)[i] = R(0.5) * x * (R(1) + std::tanh(u));
  }
  out->back = [an, out] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < out->grad.size(); ++i) {
      R x = (*an->val)[i];
      R u = R(kC) * (x + R(kA) * x * x * x);
      R th = std::tanh(u);
      R du = R(kC) * (R(1) + R(3) * R(kA) * x * x);
      R g = R(0.5) * (R(1) + th) + R(0.5) * x * (R(1) - th * th) * du;
      an->grad[i] += out->grad[i] * g;
    }
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> sigmoid(Tape<R>& t, const Tensor<R>& a) {
  auto an = a.node();
  auto out = t.emit(a.shape(), an->requires_grad);
  for (size_t i = 0; i < out->val->size(); ++i) {
    R x = (*an->val)[i];
    (*out->val)[i] = x >= 0 ? R(1) / (R(1) + std::exp(-x)) : std::exp(x) / (R(1) + std::exp(x));
  }
  out->back = [an, out] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < out->grad.size(); ++i) {
      R s = (*out->val)[i];
      an->grad[i] += out->grad[i] * s * (R(1) - s);
    }
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> sum(Tape<R>& t, const Tensor<R>& a) {
  auto an = a.node();
  auto out = t.emit({1}, an->requires_grad);
  R s = 0;
  for (R v : *an->val) s += v;
  (*out->val)[0] = s;
  out->back = [an, out] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += out->grad[0];
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> mean(Tape<R>& t, const Tensor<R>& a) {
  return scale(t, sum(t, a), R(1) / static_cast<R>(a.size()));
}

// Mean over rows: [NxD] -> [1xD].
template <class R>
Tensor<R> mean_rows(Tape<R>& t, const Tensor<R>& a) {
  int n = a.shape()[0], d = a.shape()[1];
  auto an = a.node();
  auto out = t.emit({1, d}, an->requires_grad);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) (*out->val)[j] += (*an->val)[static_cast<size_t>(i) * d + j];
  for (int j = 0; j < d; ++j) (*out->val)[j] /= static_cast<R>(n);
  out->back = [an, out, n, d] {
    if (!an->requires_grad) return;
    an->ensure_grad();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < d; ++j) an->grad[static_cast<size_t>(i) * d + j] += out->grad[j] / static_cast<R>(n);
  };
  return Tensor<R>(out);
}

template <class R>
Tensor<R> mse_mean(Tape<R>& t, const Tensor<R>& a, const Tensor<R>& b) {
  check_same_shape(a, b, "mse_mean");
  auto an = a.node(), bn = b.node();
  auto out = t.emit({1}, an->requires_grad || bn->requires_grad);
  R s = 0;
  for (size_t i = 0; i < an->val->size(); ++i) {
    R dlt = (*an->val)[i] - (*bn->val)[i];
    s += dlt * dlt;
  }
  (*out->val)[0] = s / static_cast<R>(an->val->size());
  out->back = [an, bn, out] {
    R g = out->grad[0] * R(2) / static_cast<R>(an->val->size());
    if (an->requires_grad) {
      an->ensure_grad();
      for (size_t i = 0; i < an->val->size(); ++i)
        an->grad[i] += g * ((*an->val)[i] - (*bn->val)[i]);
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (size_t i = 0; i < an->val->size(); ++i)
        bn->grad[i] -= g * ((*an->val)[i] - (*bn->val)[i]);
    }
  };
  return Tensor<R>(out);
}

// Fused mean cross-entropy over rows of logits [NxV] against integer targets.
template <class R>
Tensor<R> cross_entropy_mean(Tape<R>& t, const Tensor<R>& logits, std::vector<int> targets) {
  int n = logits.shape()[0], v = logits.shape()[1];
  if (static_cast<int>(targets.size()) != n)
    throw std::invalid_argument("cross_entropy_mean: target count mismatch");
  if (n == 0) throw std::invalid_argument("cross_entropy_mean: empty loss support");
  for (int y : targets)
    if (y < 0 || y >= v) throw std::out_of_range("cross_entropy_mean: target out of vocabulary");
  auto ln = logits.node();
  auto out = t.emit({1}, ln->requires_grad);
  auto probs = std::make_shared<std::vector<R>>(static_cast<size_t>(n) * v);
  R total = 0;
  for (int i = 0; i < n; ++i) {
    const R* x = ln->val->data() + static_cast<size_t>(i) * v;
    R* p = probs->data() + static_cast<size_t>(i) * v;
    R mx = x[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, x[j]);
    R s = 0;
    for (int j = 0; j < v; ++j) {
      p[j] = std::exp(x[j] - mx);
      s += p[j];
    }
    for (int j = 0; j < v; ++j) p[j] /= s;
    total += -(x[targets[i]] - mx - std::log(s));
  }
  (*out->val)[0] = total / static_cast<R>(n);
  out->back = [ln, out, probs, targets = std::move(targets), n, v] {
    if (!ln->requires_grad) return;
    ln->ensure_grad();
    R g = out->grad[0] / static_cast<R>(n);
    for (int i = 0; i < n; ++i) {
      const R* p = probs->data() + static_cast<size_t>(i) * v;
      R* dx = ln->grad.data() + static_cast<size_t>(i) * v;
      for (int j = 0; j < v; ++j) dx[j] += g * p[j];
      dx[targets[i]] -= g;
    }
  };
  return Tensor<R>(out);
}

// Value copy that blocks gradient flow (straight-through building block).
template <class R>
Tensor<R> stop_grad(Tape<R>& t, const Tensor<R>& a) {
  auto out = t.emit(a.shape(), false);
  *out->val = a.data();
  return Tensor<R>(out);
}

// Next-token loss as specified: logits [TxV], targets and mask per row; mean
// of -log softmax(logits_i)[target_i] over mask-in rows only.
template <class R>
Tensor<R> cross_entropy_next_token(Tape<R>& t, const Tensor<R>& logits,
                                   const std::vector<int>& targets, const std::vector<char>& mask) {
  int n = logits.shape()[0];
  if (static_cast<int>(targets.size()) != n || static_cast<int>(mask.size()) != n)
    throw std::invalid_argument("cross_entropy_next_token: length mismatch");
  std::vector<int> rows, kept;
  for (int i = 0; i < n; ++i)
    if (mask[i]) {
      rows.push_back(i);
      kept.push_back(targets[i]);
    }
  if (rows.empty()) throw std::invalid_argument("empty loss support");
  return cross_entropy_mean(t, select_rows(t, logits, rows), kept);
}

}  // namespace uni
