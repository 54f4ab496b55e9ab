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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wayspeak/rng.hpp"

namespace wayspeak {

namespace detail {

struct TensorNode {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  // Empty until gradient flows; same length as value afterwards.
  std::vector<double> grad;
  bool requires_grad = false;
  bool consumed = false;  // tape freed by a previous backward()

  // Reverse-mode tape: edges to inputs plus a closure that scatters
  // this node's grad into theirs. Cleared after backward().
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void()> backfn;

  bool in_graph() const { return requires_grad || backfn != nullptr; }
  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense f64 tensor with reverse-mode autodiff. Value semantics over a
// shared node: copies alias the same storage, as the tape requires.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::vector<std::size_t> shape, double fill, bool requires_grad = false);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values,
         bool requires_grad = false);

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    return Tensor(std::move(shape), 0.0, requires_grad);
  }
  // Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)).
  static Tensor fan_in_uniform(std::vector<std::size_t> shape,
                               std::size_t fan_in, Rng& rng,
                               bool requires_grad = true);

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t size() const { return node_->value.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& values() const { return node_->value; }
  double scalar() const;  // contract: size() == 1
  double at(std::size_t i) const { return node_->value[i]; }
  double at(std::size_t i, std::size_t j) const {
    return node_->value[i * cols() + j];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }
  bool in_graph() const { return node_ && node_->in_graph(); }

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<double>& grad() const;
  std::vector<double>& mutable_grad() { return node_->ensure_grad(); }
  void zero_grad();

  // Reverse-mode sweep from a scalar. Accumulates into every reachable
  // requires_grad tensor, then frees the traversed tape.
  void backward() const;

  std::shared_ptr<detail::TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

// Autograd recording switch (thread-local). Inference paths wrap
// themselves in NoGradGuard so no tape is built.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool saved_;
};

// ---------------------------------------------------------------------------
// Operations. All differentiable unless noted.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);      // [m,k]x[k,n]
Tensor matmul_nt(const Tensor& a, const Tensor& b);   // [m,k]x[n,k]^T -> [m,n]

// Same shape, or b broadcast over the rows of a (b: [n] against a: [m,n]).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);

// Stable softmax along `axis` (max-subtraction). 1-D: axis 0; 2-D: 0 or 1.
Tensor softmax(const Tensor& x, int axis);
// Row-wise masked softmax for [m,n]: mask true = attendable. A fully
// masked row is a contract error.
Tensor masked_softmax_rows(const Tensor& x, const std::vector<std::uint8_t>& mask);

// Normalizes over the last axis; gain/bias have that axis's length.
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 double eps = 1e-5);

// Inverted dropout: zero with probability p, survivors scaled by 1/(1-p).
// Identity when !training. p must be in [0,1).
Tensor dropout(const Tensor& x, double p, bool training, Rng& rng);

// Mean negative log-likelihood over unmasked positions.
// logits: [L, vocab]; targets: L ids; mask: L flags (true = counted).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     const std::vector<std::uint8_t>& mask);

// (1 / 2L') * sum over unmasked (target - pred)^2, L' = unmasked count.
Tensor mse(const Tensor& pred, const Tensor& target,
           const std::vector<std::uint8_t>& mask);

// Row lookup; gradient scatters to the used rows of the table.
Tensor embed(const std::vector<int>& tokens, const Tensor& table);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor stack_rows(std::span<const Tensor> rows);  // each [n] or [1,n]
Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1);
Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1);
Tensor row(const Tensor& a, std::size_t i);  // -> [n]
Tensor reshape(const Tensor& a, std::vector<std::size_t> shape);

Tensor sum(const Tensor& a);   // -> scalar
Tensor mean(const Tensor& a);  // -> scalar
Tensor mean_rows(const Tensor& a);  // [m,n] -> [n]
Tensor dot(const Tensor& a, const Tensor& b);  // 1-D x 1-D -> scalar

std::string shape_str(const std::vector<std::size_t>& shape);

}  // namespace wayspeak
