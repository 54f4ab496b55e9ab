// Copyright 2026 The Wayspeak Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "wayspeak/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "wayspeak/error.hpp"
#include "wayspeak/kernels.hpp"

namespace wayspeak {

namespace {

thread_local bool g_grad_enabled = true;

std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
  if (!g_grad_enabled) return false;
  for (const Tensor* t : inputs) {
    if (t->in_graph()) return true;
  }
  return false;
}

void attach(Tensor& out, std::initializer_list<const Tensor*> inputs,
            std::function<void()> fn) {
  auto node = out.node();
  for (const Tensor* t : inputs) {
    if (t->in_graph()) node->parents.push_back(t->node());
  }
  node->backfn = std::move(fn);
}

void check_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw DimensionError(std::string(op) + ": expected 2-D, got " +
                         shape_str(t.shape()));
  }
}

}  // namespace

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : saved_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = saved_; }

// ---------------------------------------------------------------------------
// Tensor basics
// ---------------------------------------------------------------------------

Tensor::Tensor(std::vector<std::size_t> shape, double fill, bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
  for (std::size_t d : shape) {
    if (d == 0) throw DimensionError("zero dimension in " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value.assign(shape_product(node_->shape), fill);
  node_->requires_grad = requires_grad;
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values,
               bool requires_grad)
    : node_(std::make_shared<detail::TensorNode>()) {
  if (shape_product(shape) != values.size()) {
    throw DimensionError("value count " + std::to_string(values.size()) +
                         " does not fill shape " + shape_str(shape));
  }
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::fan_in_uniform(std::vector<std::size_t> shape,
                              std::size_t fan_in, Rng& rng,
                              bool requires_grad) {
  Tensor t(std::move(shape), 0.0, requires_grad);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

std::size_t Tensor::rows() const {
  return node_->shape.size() == 2 ? node_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
  return node_->shape.empty() ? 1 : node_->shape.back();
}

double Tensor::scalar() const {
  if (size() != 1) {
    throw ContractError("scalar() on tensor of shape " + shape_str(shape()));
  }
  return node_->value[0];
}

const std::vector<double>& Tensor::grad() const {
  if (!has_grad()) {
    throw ContractError("gradient requested but none has been computed");
  }
  return node_->grad;
}

void Tensor::zero_grad() {
  if (node_) node_->grad.assign(node_->value.size(), 0.0);
}

void Tensor::backward() const {
  if (!node_) throw ContractError("backward() on an undefined tensor");
  if (size() != 1) {
    throw ContractError("backward() requires a scalar, got " +
                        shape_str(shape()));
  }
  if (!node_->in_graph()) {
    throw ContractError("backward() on a tensor outside any tape");
  }
  if (node_->consumed) {
    throw ContractError("backward() on an already-consumed tape");
  }

  // Iterative DFS post-order over parent edges; the reverse is a
  // topological order with consumers before producers.
  std::vector<detail::TensorNode*> order;
  std::unordered_set<detail::TensorNode*> visited;
  struct Frame {
    detail::TensorNode* node;
    std::size_t next_parent;
  };
  std::vector<Frame> stack;
  stack.push_back({node_.get(), 0});
  visited.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next_parent < f.node->parents.size()) {
      detail::TensorNode* p = f.node->parents[f.next_parent++].get();
      if (visited.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(f.node);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::TensorNode* n = *it;
    if (n->backfn && !n->grad.empty()) n->backfn();
  }
  // Free the tape: one backward per forward pass.
  for (detail::TensorNode* n : order) {
    if (n->backfn) {
      n->backfn = nullptr;
      n->consumed = true;
    }
    n->parents.clear();
  }
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t kb = b.shape()[0], n = b.shape()[1];
  if (k != kb) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out({m, n}, 0.0);
  kern::gemm_nn(a.values().data(), b.values().data(), out.values().data(), m,
                k, n);
  if (tracking({&a, &b})) {
    auto an = a.node(), bn = b.node();
    auto* on = out.node().get();
    const bool ag = a.in_graph(), bg = b.in_graph();
    attach(out, {&a, &b}, [an, bn, on, ag, bg, m, k, n]() {
      const double* g = on->grad.data();
      if (ag) {
        kern::gemm_nt(g, bn->value.data(), an->ensure_grad().data(), m, n, k,
                      true);
      }
      if (bg) {
        kern::gemm_tn(an->value.data(), g, bn->ensure_grad().data(), k, m, n,
                      true);
      }
    });
  }
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_2d(a, "matmul_nt");
  check_2d(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  const std::size_t n = b.shape()[0], kb = b.shape()[1];
  if (k != kb) {
    throw DimensionError("matmul_nt: shared dimensions disagree, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  Tensor out({m, n}, 0.0);
  kern::gemm_nt(a.values().data(), b.values().data(), out.values().data(), m,
                k, n);
  if (tracking({&a, &b})) {
    auto an = a.node(), bn = b.node();
    auto* on = out.node().get();
    const bool ag = a.in_graph(), bg = b.in_graph();
    attach(out, {&a, &b}, [an, bn, on, ag, bg, m, k, n]() {
      const double* g = on->grad.data();
      if (ag) {
        kern::gemm_nn(g, bn->value.data(), an->ensure_grad().data(), m, n, k,
                      true);
      }
      if (bg) {
        kern::gemm_tn(g, an->value.data(), bn->ensure_grad().data(), n, m, k,
                      true);
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Elementwise and broadcast
// ---------------------------------------------------------------------------

namespace {

enum class AddMode { kSame, kRowBroadcast };

AddMode add_mode(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return AddMode::kSame;
  if (a.ndim() == 2 && b.ndim() == 1 && b.size() == a.shape()[1]) {
    return AddMode::kRowBroadcast;
  }
  throw DimensionError("add: incompatible shapes " + shape_str(a.shape()) +
                       " vs " + shape_str(b.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  const AddMode mode = add_mode(a, b);
  Tensor out(a.shape(), 0.0);
  const std::size_t n = a.size();
  const std::size_t c = mode == AddMode::kSame ? 0 : a.shape()[1];
  for (std::size_t i = 0; i < n; ++i) {
    out.values()[i] =
        a.values()[i] +
        (mode == AddMode::kSame ? b.values()[i] : b.values()[i % c]);
  }
  if (tracking({&a, &b})) {
    auto an = a.node(), bn = b.node();
    auto* on = out.node().get();
    const bool ag = a.in_graph(), bg = b.in_graph();
    attach(out, {&a, &b}, [an, bn, on, ag, bg, mode, n, c]() {
      const auto& g = on->grad;
      if (ag) {
        auto& da = an->ensure_grad();
        for (std::size_t i = 0; i < n; ++i) da[i] += g[i];
      }
      if (bg) {
        auto& db = bn->ensure_grad();
        if (mode == AddMode::kSame) {
          for (std::size_t i = 0; i < n; ++i) db[i] += g[i];
        } else {
          for (std::size_t i = 0; i < n; ++i) db[i % c] += g[i];
        }
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("sub: shapes differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.values()[i] = a.values()[i] - b.values()[i];
  }
  if (tracking({&a, &b})) {
    auto an = a.node(), bn = b.node();
    auto* on = out.node().get();
    const bool ag = a.in_graph(), bg = b.in_graph();
    attach(out, {&a, &b}, [an, bn, on, ag, bg]() {
      const auto& g = on->grad;
      if (ag) {
        auto& da = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (bg) {
        auto& db = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("mul: shapes differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.values()[i] = a.values()[i] * b.values()[i];
  }
  if (tracking({&a, &b})) {
    auto an = a.node(), bn = b.node();
    auto* on = out.node().get();
    const bool ag = a.in_graph(), bg = b.in_graph();
    attach(out, {&a, &b}, [an, bn, on, ag, bg]() {
      const auto& g = on->grad;
      if (ag) {
        auto& da = an->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bn->value[i];
      }
      if (bg) {
        auto& db = bn->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * an->value[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) out.values()[i] = s * a.values()[i];
  if (tracking({&a})) {
    auto an = a.node();
    auto* on = out.node().get();
    attach(out, {&a}, [an, on, s]() {
      auto& da = an->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += s * g[i];
    });
  }
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    out.values()[i] = a.values()[i] > 0.0 ? a.values()[i] : 0.0;
  }
  if (tracking({&a})) {
    auto an = a.node();
    auto* on = out.node().get();
    attach(out, {&a}, [an, on]() {
      auto& da = an->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (an->value[i] > 0.0) da[i] += g[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Softmax / layernorm
// ---------------------------------------------------------------------------

namespace {

// Softmax of one contiguous-with-stride line; writes y.
void softmax_line(const double* x, double* y, std::size_t n,
                  std::size_t stride) {
  double mx = x[0];
  for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
  double denom = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = std::exp(x[i * stride] - mx);
    y[i * stride] = e;
    denom += e;
  }
  for (std::size_t i = 0; i < n; ++i) y[i * stride] /= denom;
}

void softmax_line_backward(const double* y, const double* gy, double* gx,
                           std::size_t n, std::size_t stride) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += y[i * stride] * gy[i * stride];
  for (std::size_t i = 0; i < n; ++i) {
    gx[i * stride] += y[i * stride] * (gy[i * stride] - s);
  }
}

}  // namespace

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t nd = x.ndim();
  if (nd != 1 && nd != 2) {
    throw DimensionError("softmax: expected 1-D or 2-D, got " +
                         shape_str(x.shape()));
  }
  if (axis < 0 || static_cast<std::size_t>(axis) >= nd) {
    throw ParameterError("softmax: axis " + std::to_string(axis) +
                         " invalid for shape " + shape_str(x.shape()));
  }
  Tensor out(x.shape(), 0.0);
  const std::size_t r = nd == 2 ? x.shape()[0] : 1;
  const std::size_t c = nd == 2 ? x.shape()[1] : x.shape()[0];
  const bool along_cols = (nd == 1) || axis == 1;
  if (along_cols) {
    for (std::size_t i = 0; i < r; ++i) {
      softmax_line(x.values().data() + i * c, out.values().data() + i * c, c, 1);
    }
  } else {
    for (std::size_t j = 0; j < c; ++j) {
      softmax_line(x.values().data() + j, out.values().data() + j, r, c);
    }
  }
  if (tracking({&x})) {
    auto xn = x.node();
    auto* on = out.node().get();
    attach(out, {&x}, [xn, on, r, c, along_cols]() {
      auto& gx = xn->ensure_grad();
      if (along_cols) {
        for (std::size_t i = 0; i < r; ++i) {
          softmax_line_backward(on->value.data() + i * c,
                                on->grad.data() + i * c, gx.data() + i * c, c,
                                1);
        }
      } else {
        for (std::size_t j = 0; j < c; ++j) {
          softmax_line_backward(on->value.data() + j, on->grad.data() + j,
                                gx.data() + j, r, c);
        }
      }
    });
  }
  return out;
}

Tensor masked_softmax_rows(const Tensor& x,
                           const std::vector<std::uint8_t>& mask) {
  check_2d(x, "masked_softmax_rows");
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  if (mask.size() != r * c) {
    throw DimensionError("masked_softmax_rows: mask size " +
                         std::to_string(mask.size()) + " vs tensor " +
                         shape_str(x.shape()));
  }
  Tensor out(x.shape(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = x.values().data() + i * c;
    double* yr = out.values().data() + i * c;
    const std::uint8_t* mr = mask.data() + i * c;
    double mx = -HUGE_VAL;
    for (std::size_t j = 0; j < c; ++j) {
      if (mr[j]) mx = std::max(mx, xr[j]);
    }
    if (mx == -HUGE_VAL) {
      throw ContractError("masked_softmax_rows: query row " +
                          std::to_string(i) + " has no attendable keys");
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      if (mr[j]) {
        yr[j] = std::exp(xr[j] - mx);
        denom += yr[j];
      } else {
        yr[j] = 0.0;
      }
    }
    for (std::size_t j = 0; j < c; ++j) yr[j] /= denom;
  }
  if (tracking({&x})) {
    auto xn = x.node();
    auto* on = out.node().get();
    attach(out, {&x}, [xn, on, r, c]() {
      auto& gx = xn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        softmax_line_backward(on->value.data() + i * c, on->grad.data() + i * c,
                              gx.data() + i * c, c, 1);
      }
    });
  }
  return out;
}

Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps) {
  const std::size_t d = x.cols();
  const std::size_t r = x.size() / d;
  if (gain.size() != d || bias.size() != d) {
    throw DimensionError("layernorm: gain/bias length must equal last axis (" +
                         std::to_string(d) + ")");
  }
  Tensor out(x.shape(), 0.0);
  std::vector<double> xhat(x.size());
  std::vector<double> inv_std(r);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = x.values().data() + i * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = xr[j] - mu;
      var += t * t;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[i] = inv;
    double* yr = out.values().data() + i * d;
    for (std::size_t j = 0; j < d; ++j) {
      const double xh = (xr[j] - mu) * inv;
      xhat[i * d + j] = xh;
      yr[j] = xh * gain.values()[j] + bias.values()[j];
    }
  }
  if (tracking({&x, &gain, &bias})) {
    auto xn = x.node(), gn = gain.node(), bn = bias.node();
    auto* on = out.node().get();
    const bool xg = x.in_graph(), gg = gain.in_graph(), bg = bias.in_graph();
    attach(out, {&x, &gain, &bias},
           [xn, gn, bn, on, xg, gg, bg, r, d, xhat = std::move(xhat),
            inv_std = std::move(inv_std)]() {
             const auto& g = on->grad;
             if (gg) {
               auto& dg = gn->ensure_grad();
               for (std::size_t i = 0; i < r; ++i) {
                 for (std::size_t j = 0; j < d; ++j) {
                   dg[j] += g[i * d + j] * xhat[i * d + j];
                 }
               }
             }
             if (bg) {
               auto& db = bn->ensure_grad();
               for (std::size_t i = 0; i < r; ++i) {
                 for (std::size_t j = 0; j < d; ++j) db[j] += g[i * d + j];
               }
             }
             if (xg) {
               auto& dx = xn->ensure_grad();
               for (std::size_t i = 0; i < r; ++i) {
                 double mean_dxh = 0.0, mean_dxh_xh = 0.0;
                 for (std::size_t j = 0; j < d; ++j) {
                   const double dxh = g[i * d + j] * gn->value[j];
                   mean_dxh += dxh;
                   mean_dxh_xh += dxh * xhat[i * d + j];
                 }
                 mean_dxh /= static_cast<double>(d);
                 mean_dxh_xh /= static_cast<double>(d);
                 for (std::size_t j = 0; j < d; ++j) {
                   const double dxh = g[i * d + j] * gn->value[j];
                   dx[i * d + j] += inv_std[i] * (dxh - mean_dxh -
                                                  xhat[i * d + j] * mean_dxh_xh);
                 }
               }
             }
           });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

Tensor dropout(const Tensor& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw ParameterError("dropout: probability must be in [0,1), got " +
                         std::to_string(p));
  }
  if (!training || p == 0.0) return x;  // identity, bit for bit
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<std::uint8_t> kept(x.size());
  Tensor out(x.shape(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    kept[i] = rng.uniform() >= p ? 1 : 0;
    out.values()[i] = kept[i] ? x.values()[i] * keep_scale : 0.0;
  }
  if (tracking({&x})) {
    auto xn = x.node();
    auto* on = out.node().get();
    attach(out, {&x}, [xn, on, keep_scale, kept = std::move(kept)]() {
      auto& dx = xn->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (kept[i]) dx[i] += g[i] * keep_scale;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<std::uint8_t>& mask) {
  check_2d(logits, "cross_entropy");
  const std::size_t L = logits.shape()[0], v = logits.shape()[1];
  if (targets.size() != L) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(L) + " rows");
  }
  if (!mask.empty() && mask.size() != L) {
    throw DimensionError("cross_entropy: mask length " +
                         std::to_string(mask.size()) + " vs " +
                         std::to_string(L) + " rows");
  }
  std::size_t counted = 0;
  for (std::size_t i = 0; i < L; ++i) {
    if (mask.empty() || mask[i]) {
      if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= v) {
        throw IndexError("cross_entropy: target id " +
                         std::to_string(targets[i]) + " outside vocab of " +
                         std::to_string(v));
      }
      ++counted;
    }
  }
  if (counted == 0) {
    throw ParameterError("cross_entropy: every position is masked out");
  }

  std::vector<double> probs(L * v, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double* xr = logits.values().data() + i * v;
    double* pr = probs.data() + i * v;
    double mx = xr[0];
    for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, xr[j]);
    double denom = 0.0;
    for (std::size_t j = 0; j < v; ++j) {
      pr[j] = std::exp(xr[j] - mx);
      denom += pr[j];
    }
    for (std::size_t j = 0; j < v; ++j) pr[j] /= denom;
    total += std::log(denom) + mx - xr[targets[i]];
  }
  Tensor out({1}, total / static_cast<double>(counted));
  if (tracking({&logits})) {
    auto ln = logits.node();
    auto* on = out.node().get();
    attach(out, {&logits},
           [ln, on, targets, mask, counted, L, v, probs = std::move(probs)]() {
             const double g = on->grad[0] / static_cast<double>(counted);
             auto& dx = ln->ensure_grad();
             for (std::size_t i = 0; i < L; ++i) {
               if (!mask.empty() && !mask[i]) continue;
               const double* pr = probs.data() + i * v;
               double* dr = dx.data() + i * v;
               for (std::size_t j = 0; j < v; ++j) dr[j] += g * pr[j];
               dr[targets[i]] -= g;
             }
           });
  }
  return out;
}

Tensor mse(const Tensor& pred, const Tensor& target,
           const std::vector<std::uint8_t>& mask) {
  if (pred.size() != target.size()) {
    throw DimensionError("mse: lengths differ, " + shape_str(pred.shape()) +
                         " vs " + shape_str(target.shape()));
  }
  const std::size_t L = pred.size();
  if (!mask.empty() && mask.size() != L) {
    throw DimensionError("mse: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(L));
  }
  std::size_t counted = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < L; ++i) {
    if (!mask.empty() && !mask[i]) continue;
    const double d = target.values()[i] - pred.values()[i];
    total += d * d;
    ++counted;
  }
  if (counted == 0) throw ParameterError("mse: every position is masked out");
  Tensor out({1}, total / (2.0 * static_cast<double>(counted)));
  if (tracking({&pred, &target})) {
    auto pn = pred.node(), tn = target.node();
    auto* on = out.node().get();
    const bool pg = pred.in_graph(), tg = target.in_graph();
    attach(out, {&pred, &target}, [pn, tn, on, pg, tg, mask, counted, L]() {
      const double g = on->grad[0] / static_cast<double>(counted);
      for (std::size_t i = 0; i < L; ++i) {
        if (!mask.empty() && !mask[i]) continue;
        const double d = pn->value[i] - tn->value[i];
        if (pg) pn->ensure_grad()[i] += g * d;
        if (tg) tn->ensure_grad()[i] -= g * d;
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

Tensor embed(const std::vector<int>& tokens, const Tensor& table) {
  check_2d(table, "embed");
  const std::size_t v = table.shape()[0], d = table.shape()[1];
  for (int t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= v) {
      throw IndexError("embed: token id " + std::to_string(t) +
                       " outside table of " + std::to_string(v) + " rows");
    }
  }
  Tensor out({tokens.size(), d}, 0.0);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const double* src =
        table.values().data() + static_cast<std::size_t>(tokens[i]) * d;
    std::copy(src, src + d, out.values().data() + i * d);
  }
  if (tracking({&table})) {
    auto tn = table.node();
    auto* on = out.node().get();
    attach(out, {&table}, [tn, on, tokens, d]() {
      auto& dt = tn->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t i = 0; i < tokens.size(); ++i) {
        double* dst = dt.data() + static_cast<std::size_t>(tokens[i]) * d;
        const double* src = g.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.ndim() == 1 && b.ndim() == 1) {
    const std::size_t p = a.size(), q = b.size();
    Tensor out({p + q}, 0.0);
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    std::copy(b.values().begin(), b.values().end(), out.values().begin() + p);
    if (tracking({&a, &b})) {
      auto an = a.node(), bn = b.node();
      auto* on = out.node().get();
      const bool ag = a.in_graph(), bg = b.in_graph();
      attach(out, {&a, &b}, [an, bn, on, ag, bg, p, q]() {
        const auto& g = on->grad;
        if (ag) {
          auto& da = an->ensure_grad();
          for (std::size_t i = 0; i < p; ++i) da[i] += g[i];
        }
        if (bg) {
          auto& db = bn->ensure_grad();
          for (std::size_t i = 0; i < q; ++i) db[i] += g[p + i];
        }
      });
    }
    return out;
  }
  check_2d(a, "concat_cols");
  check_2d(b, "concat_cols");
  if (a.shape()[0] != b.shape()[0]) {
    throw DimensionError("concat_cols: row counts differ, " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], p = a.shape()[1], q = b.shape()[1];
  Tensor out({m, p + q}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(a.values().begin() + i * p, a.values().begin() + (i + 1) * p,
              out.values().begin() + i * (p + q));
    std::copy(b.values().begin() + i * q, b.values().begin() + (i + 1) * q,
              out.values().begin() + i * (p + q) + p);
  }
  if (tracking({&a, &b})) {
    auto an = a.node(), bn = b.node();
    auto* on = out.node().get();
    const bool ag = a.in_graph(), bg = b.in_graph();
    attach(out, {&a, &b}, [an, bn, on, ag, bg, m, p, q]() {
      const auto& g = on->grad;
      for (std::size_t i = 0; i < m; ++i) {
        if (ag) {
          auto& da = an->ensure_grad();
          for (std::size_t j = 0; j < p; ++j) da[i * p + j] += g[i * (p + q) + j];
        }
        if (bg) {
          auto& db = bn->ensure_grad();
          for (std::size_t j = 0; j < q; ++j) {
            db[i * q + j] += g[i * (p + q) + p + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw ParameterError("stack_rows: no rows given");
  const std::size_t n = rows[0].size();
  for (const Tensor& r : rows) {
    if (r.size() != n || r.ndim() > 2 || (r.ndim() == 2 && r.shape()[0] != 1)) {
      throw DimensionError("stack_rows: every row must be a length-" +
                           std::to_string(n) + " vector");
    }
  }
  Tensor out({rows.size(), n}, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].values().begin(), rows[i].values().end(),
              out.values().begin() + i * n);
  }
  bool any = false;
  if (grad_enabled()) {
    for (const Tensor& r : rows) any = any || r.in_graph();
  }
  if (any) {
    std::vector<std::shared_ptr<detail::TensorNode>> nodes;
    nodes.reserve(rows.size());
    auto out_node = out.node();
    for (const Tensor& r : rows) {
      nodes.push_back(r.node());
      if (r.in_graph()) out_node->parents.push_back(r.node());
    }
    auto* on = out_node.get();
    out_node->backfn = [nodes = std::move(nodes), on, n]() {
      const auto& g = on->grad;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (!nodes[i]->in_graph()) continue;
        auto& dr = nodes[i]->ensure_grad();
        for (std::size_t j = 0; j < n; ++j) dr[j] += g[i * n + j];
      }
    };
  }
  return out;
}

Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
  check_2d(a, "slice_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (r0 >= r1 || r1 > m) {
    throw IndexError("slice_rows: range [" + std::to_string(r0) + "," +
                     std::to_string(r1) + ") outside " + shape_str(a.shape()));
  }
  Tensor out({r1 - r0, n}, 0.0);
  std::copy(a.values().begin() + r0 * n, a.values().begin() + r1 * n,
            out.values().begin());
  if (tracking({&a})) {
    auto an = a.node();
    auto* on = out.node().get();
    attach(out, {&a}, [an, on, r0, n]() {
      auto& da = an->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t i = 0; i < g.size(); ++i) da[r0 * n + i] += g[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
  check_2d(a, "slice_cols");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (c0 >= c1 || c1 > n) {
    throw IndexError("slice_cols: range [" + std::to_string(c0) + "," +
                     std::to_string(c1) + ") outside " + shape_str(a.shape()));
  }
  const std::size_t w = c1 - c0;
  Tensor out({m, w}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy(a.values().begin() + i * n + c0, a.values().begin() + i * n + c1,
              out.values().begin() + i * w);
  }
  if (tracking({&a})) {
    auto an = a.node();
    auto* on = out.node().get();
    attach(out, {&a}, [an, on, m, n, c0, w]() {
      auto& da = an->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) da[i * n + c0 + j] += g[i * w + j];
      }
    });
  }
  return out;
}

Tensor row(const Tensor& a, std::size_t i) {
  check_2d(a, "row");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  if (i >= m) {
    throw IndexError("row: index " + std::to_string(i) + " outside " +
                     shape_str(a.shape()));
  }
  Tensor out({n}, 0.0);
  std::copy(a.values().begin() + i * n, a.values().begin() + (i + 1) * n,
            out.values().begin());
  if (tracking({&a})) {
    auto an = a.node();
    auto* on = out.node().get();
    attach(out, {&a}, [an, on, i, n]() {
      auto& da = an->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t j = 0; j < n; ++j) da[i * n + j] += g[j];
    });
  }
  return out;
}

Tensor reshape(const Tensor& a, std::vector<std::size_t> shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  if (n != a.size()) {
    throw DimensionError("reshape: " + shape_str(a.shape()) + " to " +
                         shape_str(shape) + " changes element count");
  }
  Tensor out(std::move(shape), a.values());
  if (tracking({&a})) {
    auto an = a.node();
    auto* on = out.node().get();
    attach(out, {&a}, [an, on]() {
      auto& da = an->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  Tensor out({1}, s);
  if (tracking({&a})) {
    auto an = a.node();
    auto* on = out.node().get();
    attach(out, {&a}, [an, on]() {
      auto& da = an->ensure_grad();
      const double g = on->grad[0];
      for (double& v : da) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor mean_rows(const Tensor& a) {
  check_2d(a, "mean_rows");
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  Tensor out({n}, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.values()[j] += a.values()[i * n + j];
  }
  for (double& v : out.values()) v /= static_cast<double>(m);
  if (tracking({&a})) {
    auto an = a.node();
    auto* on = out.node().get();
    attach(out, {&a}, [an, on, m, n]() {
      auto& da = an->ensure_grad();
      const auto& g = on->grad;
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
          da[i * n + j] += g[j] / static_cast<double>(m);
        }
      }
    });
  }
  return out;
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw DimensionError("dot: lengths differ, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  Tensor out({1}, s);
  if (tracking({&a, &b})) {
    auto an = a.node(), bn = b.node();
    auto* on = out.node().get();
    const bool ag = a.in_graph(), bg = b.in_graph();
    attach(out, {&a, &b}, [an, bn, on, ag, bg]() {
      const double g = on->grad[0];
      if (ag) {
        auto& da = an->ensure_grad();
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g * bn->value[i];
      }
      if (bg) {
        auto& db = bn->ensure_grad();
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += g * an->value[i];
      }
    });
  }
  return out;
}

}  // namespace wayspeak
